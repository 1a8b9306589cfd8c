"""PEP-like records with planted fixed and random effects."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from tacklepep.gamlss.families import SST

POSITIONS = ["ILB", "OLB", "DE", "DT", "CB", "SS", "FS"]
POSITION_EFFECT = {"ILB": 0.0, "OLB": 0.05, "DE": -0.15, "DT": -0.2, "CB": 0.35, "SS": 0.3, "FS": 0.4}
CARRIER_POSITIONS = ["RB", "WR", "TE"]


@dataclass(frozen=True)
class RecordSimConfig:
    n_records: int = 8000
    n_tacklers: int = 150
    n_carriers: int = 120
    n_teams: int = 32
    records_per_drive: float = 2.0
    sd_tackler: float = 0.5
    sd_carrier: float = 0.3
    sd_team: float = 0.2
    sigma: float = 1.0
    nu: float = 1.5
    tau: float = 5.0
    intercept: float = 0.6
    short_yardage: float = -0.3
    fourth_down: float = 0.4
    fourth_quarter: float = 0.1
    turnover: float = -0.5
    pass_complete: float = 0.2
    carrier_wr: float = 0.15
    carrier_te: float = -0.1
    position_effects: bool = True
    planted_counts: tuple = ()  # explicit tackle counts for the first tacklers
    planted_ability: tuple = ()  # their intercepts


@dataclass
class SimulatedRecords:
    records: pd.DataFrame
    tackler_effect: pd.Series
    carrier_effect: pd.Series
    team_effect: pd.Series
    beta: dict


def simulate_records(config: RecordSimConfig = RecordSimConfig(), seed: int = 0) -> SimulatedRecords:
    """Draw records from the mixed model with SST noise.

    Tackler ids are ``"t0000"``..., carriers ``"c000"``..., teams
    ``"o00"``. Drives group consecutive records of one offense.
    """
    cfg = config
    rng = np.random.default_rng(seed)
    n = cfg.n_records
    t_ids = np.array([f"t{i:04d}" for i in range(cfg.n_tacklers)])
    T = rng.normal(0.0, cfg.sd_tackler, cfg.n_tacklers)
    k = len(cfg.planted_ability)
    if k:
        T[:k] = cfg.planted_ability
    # tackle counts: planted ones first, the rest share the remainder evenly at random
    counts = np.zeros(cfg.n_tacklers, dtype=np.int64)
    counts[:len(cfg.planted_counts)] = cfg.planted_counts
    rest = n - counts.sum()
    free = np.arange(len(cfg.planted_counts), cfg.n_tacklers)
    counts[free] = rng.multinomial(rest, np.full(len(free), 1.0 / len(free)))
    tackler = rng.permutation(np.repeat(np.arange(cfg.n_tacklers), counts))
    pos_of = np.array([POSITIONS[i % len(POSITIONS)] for i in range(cfg.n_tacklers)])

    B = rng.normal(0.0, cfg.sd_carrier, cfg.n_carriers)
    O = rng.normal(0.0, cfg.sd_team, cfg.n_teams)
    c_pos = np.array([CARRIER_POSITIONS[i % 3] for i in range(cfg.n_carriers)])
    carrier_team = np.arange(cfg.n_carriers) % cfg.n_teams
    carrier = rng.integers(0, cfg.n_carriers, n)
    team = carrier_team[carrier]

    short = rng.random(n) < 0.12
    fourth = rng.random(n) < 0.05
    q4 = rng.random(n) < 0.25
    turnover = fourth & (rng.random(n) < 0.5)
    is_pass = c_pos[carrier] != "RB"
    is_pass = is_pass | (rng.random(n) < 0.2)
    pass_result = np.where(is_pass, "C", "")
    tpos = pos_of[tackler]
    pos_eff = np.array([POSITION_EFFECT[p] for p in tpos]) if cfg.position_effects else 0.0
    mu = (cfg.intercept + pos_eff + cfg.short_yardage * short + cfg.fourth_down * fourth
          + cfg.fourth_quarter * q4 + cfg.turnover * turnover + cfg.pass_complete * (pass_result == "C")
          + cfg.carrier_wr * (c_pos[carrier] == "WR") + cfg.carrier_te * (c_pos[carrier] == "TE")
          + T[tackler] + B[carrier] + O[team])
    y = SST().rvs(n, mu, cfg.sigma, cfg.nu, cfg.tau, rng=rng)
    # drives: consecutive records of the same team, roughly records_per_drive long
    order = np.lexsort((rng.random(n), team))
    drive = np.empty(n, dtype=object)
    sizes = rng.poisson(cfg.records_per_drive - 1, n) + 1
    i = d = 0
    while i < n:
        j = i
        t0 = team[order[i]]
        while j < n and j - i < sizes[d] and team[order[j]] == t0:
            j += 1
        drive[order[i:j]] = f"d{d:05d}"
        i, d = j, d + 1
    rec = pd.DataFrame({
        "game_id": 0, "play_id": np.arange(n), "week": 1 + np.arange(n) % 9,
        "tackler_id": t_ids[tackler], "tackler_position": tpos,
        "ball_carrier_id": np.array([f"c{i:03d}" for i in range(cfg.n_carriers)])[carrier],
        "ball_carrier_position": c_pos[carrier],
        "off_team_id": np.array([f"o{i:02d}" for i in range(cfg.n_teams)])[team],
        "drive_id": drive, "pep": y,
        "short_yardage": short, "fourth_down": fourth, "fourth_quarter": q4,
        "turnover": turnover, "pass_result": pass_result,
        "play_type": np.where(is_pass, "pass", "run"), "source": "tackle",
    })
    beta = {"(Intercept)": cfg.intercept, "short_yardage": cfg.short_yardage,
            "fourth_down": cfg.fourth_down, "fourth_quarter": cfg.fourth_quarter,
            "turnover": cfg.turnover, "pass_result[C]": cfg.pass_complete,
            "ball_carrier_position[WR]": cfg.carrier_wr, "ball_carrier_position[TE]": cfg.carrier_te}
    if cfg.position_effects:
        for p in POSITIONS:
            beta[f"tackler_position[{p}]"] = POSITION_EFFECT[p]
    c_ids = [f"c{i:03d}" for i in range(cfg.n_carriers)]
    o_ids = [f"o{i:02d}" for i in range(cfg.n_teams)]
    return SimulatedRecords(rec, pd.Series(T, index=t_ids), pd.Series(B, index=c_ids),
                            pd.Series(O, index=o_ids), beta)
