"""Scripted tracking corpus with known outcomes.

Plays are simulated in canonical coordinates at 10 Hz. After gaining
possession the carrier runs towards the goal line; defenders pursue by
aiming at the carrier's projected position and the first one to come
within ``contact_radius`` attempts a tackle. Scripted misses let the
carrier continue. After a made tackle the carrier is carried forward by a
post-contact yardage and the play ends.

The counterfactual end-of-play yard line is obtained by simulating the
same script again with the tackler taken off the field.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from tacklepep.io import atomic_write_text, write_csv
from tacklepep.tracking import (HALF_WIDTH, PLAYERS_COLUMNS, PLAYS_COLUMNS, TACKLES_COLUMNS,
                                TRACKING_COLUMNS, canonicalize, write_tracking_raw)

DT = 0.1
MAX_SPEED = 11.0
OFFENSE_POSITIONS = ["QB", "RB", "WR", "WR", "WR", "TE", "T", "G", "C", "G", "T"]
DEFENSE_POSITIONS = ["DE", "DT", "DT", "DE", "OLB", "ILB", "OLB", "CB", "CB", "SS", "FS"]
TEAM_NAMES = ["ARI", "BAL", "CHI", "DAL", "GB", "KC", "MIA", "NE", "NYG", "PHI",
              "SEA", "SF", "TB", "TEN", "WAS", "LV"]


@dataclass(frozen=True)
class SimConfig:
    n_games: int = 36
    plays_per_game: int = 14
    n_teams: int = 8
    n_weeks: int = 9
    run_fraction: float = 0.5
    penalty_rate: float = 0.1
    missed_tackle_rate: float = 0.1
    dominant_rate: float = 0.1
    breakaway_rate: float = 0.05
    noise_sd: float = 0.0
    contact_radius: float = 1.0
    max_frames: int = 150

    def __post_init__(self):
        if self.n_teams < 2 or self.n_teams > len(TEAM_NAMES):
            raise ValueError(f"n_teams must lie in [2, {len(TEAM_NAMES)}]")
        for name in ("run_fraction", "penalty_rate", "missed_tackle_rate",
                     "dominant_rate", "breakaway_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")


def team_roster(t: int):
    """(offense ids, defense ids) for team index ``t``."""
    base = 40000 + 100 * t
    return ([base + i for i in range(11)], [base + 50 + i for i in range(11)])


@dataclass
class ScenarioScript:
    """Everything needed to (re-)simulate one play deterministically."""

    los: float
    play_type: str
    scenario: str
    offense_ids: list
    defense_ids: list
    carrier_slot: int
    start: np.ndarray  # (22, 2), offense first
    possession_point: tuple
    n_pre: int
    carrier_heading: float
    carrier_vmax: float
    def_speed: np.ndarray
    def_delay: np.ndarray
    def_blocked: np.ndarray  # frames after possession with reduced speed
    off_speed: np.ndarray
    missed: frozenset = frozenset()
    pc_noise: float = 0.0
    contact_radius: float = 1.0
    max_frames: int = 150

    @property
    def carrier_id(self) -> int:
        return self.offense_ids[self.carrier_slot]


@dataclass
class SimResult:
    pos: np.ndarray  # (n_frames, 22, 2)
    heading: np.ndarray  # (n_frames, 22), canonical degrees
    ball: np.ndarray  # (n_frames, 2)
    events: dict
    end_kind: str
    tackler_id: int | None
    contact_frame: int | None  # 1-based frame id
    possession_frame: int
    eopy: float
    post_contact: float | None
    missed_ids: list = field(default_factory=list)


def _heading_vec(deg):
    r = np.radians(deg)
    return np.array([-np.cos(r), np.sin(r)])


def _heading_of(v, default):
    if np.hypot(*v) < 1e-9:
        return default
    return float(np.mod(np.degrees(np.arctan2(v[1], -v[0])), 360.0))


def simulate_play(s: ScenarioScript, removed: int | None = None) -> SimResult:
    """Run a script; ``removed`` takes one defender off the field."""
    n_off = 11
    pos = [s.start.copy()]
    start_heading = np.array([0.0] * n_off + [180.0] * 11)
    heads = [start_heading.copy()]
    cslot = s.carrier_slot
    qb = 0
    ball = [s.start[qb].copy()]
    events = {1: "ball_snap"}
    active = np.ones(11, dtype=bool)
    if removed is not None:
        active[s.defense_ids.index(removed)] = False
    missed_ids = []

    # pre-possession: carrier moves to the possession point
    target = np.asarray(s.possession_point, dtype=float)
    step = (target - s.start[cslot]) / s.n_pre
    for f in range(s.n_pre):
        p = pos[-1].copy()
        h = heads[-1].copy()
        p[cslot] = p[cslot] + step
        h[cslot] = _heading_of(step, h[cslot])
        pos.append(p)
        heads.append(h)
        ball.append(p[qb].copy() if f < s.n_pre - 1 or s.play_type == "run" else target.copy())
    poss_frame = len(pos)
    events[poss_frame] = "handoff" if s.play_type == "run" else "pass_outcome_caught"
    if s.play_type == "pass":
        events[max(2, poss_frame - 6)] = "pass_forward"
    ball[-1] = pos[-1][cslot].copy()

    speed_c = min(np.hypot(*step) / DT, s.carrier_vmax)
    heading_c = s.carrier_heading
    tackle_frame = None
    tackler = None
    end_kind = None
    pc = None
    t_after = 0
    while len(pos) < s.max_frames:
        # contact is checked on every frame from possession onwards
        c_now = pos[-1][cslot]
        dd = np.hypot(pos[-1][n_off:, 0] - c_now[0], pos[-1][n_off:, 1] - c_now[1])
        # fully engaged defenders cannot make a play
        dd[~active | (s.def_blocked >= s.max_frames)] = np.inf
        j = int(np.argmin(dd))
        if dd[j] <= s.contact_radius:
            did = s.defense_ids[j]
            if did in s.missed:
                missed_ids.append(did)
                active[j] = False
                speed_c *= 0.7
            else:
                tackler = did
                tackle_frame = len(pos)
                pc = max(0.0, 0.15 * speed_c + 0.5 + s.pc_noise)
                break
        p = pos[-1].copy()
        h = heads[-1].copy()
        c = p[cslot]
        # carrier
        speed_c = min(s.carrier_vmax, speed_c + 4.0 * DT)
        hc = heading_c if abs(c[1]) < HALF_WIDTH - 3 else 0.0
        vc = speed_c * _heading_vec(hc)
        c_new = c + vc * DT
        # defenders pursue the projected carrier position
        for j in range(11):
            k = n_off + j
            if not active[j] or t_after < s.def_delay[j]:
                continue
            u = s.def_speed[j] * (0.15 if t_after < s.def_blocked[j] else 1.0)
            d = c_new - p[k]
            dist = np.hypot(*d)
            lead = min(dist / max(u, 1e-6), 1.5)
            aim = c_new + vc * lead - p[k]
            n = np.hypot(*aim)
            if n > 1e-9:
                mv = aim / n * min(u * DT, n)
                p[k] = p[k] + mv
                h[k] = _heading_of(mv, h[k])
        # other offensive players drift downfield
        for i in range(n_off):
            if i == cslot:
                continue
            mv = s.off_speed[i] * DT * _heading_vec(0.0)
            p[i] = p[i] + mv
            h[i] = 0.0 if s.off_speed[i] > 0 else h[i]
        # nobody but the carrier leaves the field
        others = np.arange(len(p)) != cslot
        p[others, 0] = np.clip(p[others, 0], -9.5, 109.5)
        p[others, 1] = np.clip(p[others, 1], -HALF_WIDTH + 0.1, HALF_WIDTH - 0.1)
        p[cslot] = c_new
        h[cslot] = hc
        t_after += 1
        pos.append(p)
        heads.append(h)
        ball.append(c_new.copy())
        if c_new[0] <= 0.0:
            end_kind = "touchdown"
            break
        if abs(c_new[1]) >= HALF_WIDTH - 0.05:
            end_kind = "out_of_bounds"
            break
    if end_kind is None and tackler is None:
        end_kind = "out_of_bounds"

    if tackler is not None:
        events.setdefault(tackle_frame, "first_contact")
        j = s.defense_ids.index(tackler)
        k = n_off + j
        # snap to the output grid so the carrier-tackler distance stays tied
        pos[-1] = np.round(pos[-1], 2)
        offset = pos[-1][k] - pos[-1][cslot]
        n_pc = int(min(10, max(1, math.ceil(pc / 0.4))))
        c0 = pos[-1][cslot].copy()
        end_kind = "tackle"
        for i in range(1, n_pc + 1):
            p = pos[-1].copy()
            h = heads[-1].copy()
            cx = round(c0[0] - pc * i / n_pc, 2)
            p[cslot] = np.array([cx, c0[1]])
            p[k] = p[cslot] + offset
            h[cslot] = 0.0
            pos.append(p)
            heads.append(h)
            ball.append(p[cslot].copy())
            if cx <= 0.0:
                end_kind = "touchdown"
                break
    end_frame = len(pos)
    events[end_frame] = "tackle" if end_kind == "tackle" else end_kind
    pos = np.array(pos)
    return SimResult(pos, np.array(heads), np.array(ball), events, end_kind,
                     tackler if end_kind == "tackle" else None,
                     tackle_frame if end_kind == "tackle" else None,
                     poss_frame, float(pos[-1, cslot, 0]),
                     pc if end_kind == "tackle" else None, missed_ids)


def _formation(los, play_type, rng):
    off = np.array([
        [los + (5.0 if play_type == "pass" else 1.0), 0.0],  # QB
        [los + 6.0, rng.uniform(-1, 1)],  # RB
        [los + 0.5, -15.0], [los + 0.5, 15.0], [los + 1.0, -9.0],  # WR
        [los + 0.5, 6.0],  # TE
        [los + 0.5, -4.0], [los + 0.5, -2.0], [los + 0.5, 0.0], [los + 0.5, 2.0], [los + 0.5, 4.0],
    ])
    dfn = np.array([
        [los - 1.0, -6.0], [los - 1.0, -2.0], [los - 1.0, 2.0], [los - 1.0, 6.0],
        [los - 5.0, -8.0], [los - 5.0, 0.0], [los - 5.0, 8.0],
        [los - 7.0, -15.0], [los - 7.0, 15.0],
        [los - 11.0, 5.0], [los - 14.0, -5.0],
    ])
    dfn = dfn + rng.uniform(-1.0, 1.0, dfn.shape)
    dfn[:, 0] = np.clip(dfn[:, 0], -9.0, 109.0)
    off[:, 0] = np.clip(off[:, 0], -9.0, 109.0)
    return np.vstack([off, dfn])


def make_script(los, play_type, scenario, offense_ids, defense_ids, cfg: SimConfig, rng) -> ScenarioScript:
    start = _formation(los, play_type, rng)
    if play_type == "run":
        carrier_slot = 1
        n_pre = 5
        poss = (los + 4.0, float(rng.uniform(-2.5, 2.5)))
    else:
        carrier_slot = int(rng.choice([1, 2, 3, 4, 5]))
        n_pre = 12
        depth = float(rng.uniform(2.0, 8.0))
        y0 = start[carrier_slot, 1]
        poss = (max(-5.0, los - depth), float(np.clip(y0 * 0.6, -20, 20)))
    def_speed = rng.uniform(5.5, 8.5, 11)
    def_delay = rng.integers(0, 6, 11).astype(float)
    def_blocked = np.where(np.arange(11) < 4, rng.integers(0, 15, 11), 0).astype(float)
    off_speed = rng.uniform(0.0, 3.0, 11)
    heading = float(rng.uniform(-20, 20))
    vmax = float(rng.uniform(7.0, 10.0))
    if scenario in ("dominant", "breakaway"):
        # the defense is beaten; in "dominant" plays one deep defender remains
        def_blocked[:] = cfg.max_frames
        def_speed[:] = rng.uniform(0.5, 2.0, 11)
        heading = float(rng.uniform(-8, 8))
        if scenario == "dominant":
            j = int(rng.choice([7, 8, 9, 10]))
            def_blocked[j] = 0
            def_delay[j] = 0
            def_speed[j] = float(rng.uniform(7.0, 9.0))
            # place the stopper downfield, roughly in the carrier's lane
            start[11 + j] = [max(1.0, los - rng.uniform(12.0, 20.0)),
                             float(np.clip(poss[1] + rng.uniform(-6, 6), -20, 20))]
    missed = frozenset()
    if scenario == "normal" and rng.random() < cfg.missed_tackle_rate:
        # the nearest front defender at possession will miss
        d = np.hypot(start[11:, 0] - poss[0], start[11:, 1] - poss[1])
        missed = frozenset({defense_ids[int(np.argmin(d))]})
    pc_noise = float(rng.normal(0.0, cfg.noise_sd)) if cfg.noise_sd > 0 else 0.0
    return ScenarioScript(los, play_type, scenario, list(offense_ids), list(defense_ids),
                          carrier_slot, start, poss, n_pre, heading, vmax, def_speed,
                          def_delay, def_blocked, off_speed, missed, pc_noise,
                          cfg.contact_radius, cfg.max_frames)


def _kinematics(pos, heading):
    """speed, accel, dist per (frame, entity) from positions."""
    disp = np.zeros(pos.shape[:2])
    disp[1:] = np.hypot(*(pos[1:] - pos[:-1]).transpose(2, 0, 1))
    speed = disp / DT
    accel = np.zeros_like(speed)
    accel[1:] = np.abs(speed[1:] - speed[:-1]) / DT
    return speed, accel, disp


def _play_rows(game_id, play_id, res: SimResult, script: ScenarioScript, clubs, direction):
    n_f = len(res.pos)
    ids = script.offense_ids + script.defense_ids
    speed, accel, disp = _kinematics(res.pos, res.heading)
    frames = np.repeat(np.arange(1, n_f + 1), 23)
    ent = np.tile(np.array(ids + [None], dtype=object), n_f)
    bpos = res.ball
    bdisp = np.zeros(n_f)
    bdisp[1:] = np.hypot(*(bpos[1:] - bpos[:-1]).T)
    bspeed = bdisp / DT
    bacc = np.zeros(n_f)
    bacc[1:] = np.abs(bspeed[1:] - bspeed[:-1]) / DT
    x = np.concatenate([res.pos[..., 0], bpos[:, :1]], axis=1).ravel()
    y = np.concatenate([res.pos[..., 1], bpos[:, 1:]], axis=1).ravel()
    s = np.concatenate([speed, bspeed[:, None]], axis=1).ravel()
    a = np.concatenate([accel, bacc[:, None]], axis=1).ravel()
    dis = np.concatenate([disp, bdisp[:, None]], axis=1).ravel()
    hd = np.concatenate([res.heading, res.heading[:, script.carrier_slot:script.carrier_slot + 1]],
                        axis=1).ravel()
    club = np.tile(np.array([clubs[0]] * 11 + [clubs[1]] * 11 + ["football"], dtype=object), n_f)
    event = np.array([res.events.get(f) for f in frames], dtype=object)
    canon = pd.DataFrame({"x": x, "y": y, "o": hd, "dir": hd, "playDirection": direction})
    raw = _to_raw(canon)
    return pd.DataFrame({
        "gameId": game_id, "playId": play_id, "nflId": ent, "frameId": frames,
        "playDirection": direction, "x": raw["x"], "y": raw["y"],
        "s": np.minimum(s, MAX_SPEED), "a": a, "dis": dis, "o": raw["o"], "dir": raw["dir"],
        "event": event, "club": club,
    })


def _to_raw(canon: pd.DataFrame) -> pd.DataFrame:
    left = (canon["playDirection"] == "left").to_numpy()
    out = pd.DataFrame(index=canon.index)
    out["x"] = np.where(left, canon["x"] + 10.0, 110.0 - canon["x"])
    out["y"] = np.where(left, canon["y"] + HALF_WIDTH, HALF_WIDTH - canon["y"])
    for c in ("o", "dir"):
        out[c] = np.mod(np.where(left, canon[c] + 270.0, canon[c] + 90.0), 360.0)
    return out


def _round2(df, cols):
    for c in cols:
        df[c] = np.round(df[c].to_numpy(dtype=float), 2)
        # keep angles inside [0, 360) after rounding
        if c in ("o", "dir"):
            df[c] = np.where(df[c] >= 360.0, 0.0, df[c])
    return df


def _canonical_carrier_x(raw_df, carrier_id, frame_id):
    row = raw_df[(raw_df["nflId"] == carrier_id) & (raw_df["frameId"] == frame_id)]
    return float(canonicalize(row)["x"].iloc[0])


@dataclass
class Corpus:
    tracking: pd.DataFrame
    plays: pd.DataFrame
    tackles: pd.DataFrame
    players: pd.DataFrame
    oracle: pd.DataFrame
    oracle_frames: pd.DataFrame
    summary: dict

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {k: out / f"{k}.csv" for k in ("tracking", "plays", "tackles", "players",
                                                  "oracle", "oracle_frames")}
        write_tracking_raw(self.tracking, paths["tracking"])
        for k in ("plays", "tackles", "players", "oracle", "oracle_frames"):
            write_csv(getattr(self, k), paths[k])
        paths["summary"] = out / "corpus_summary.json"
        atomic_write_text(paths["summary"], json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
        return paths


def generate_tracking_corpus(config: SimConfig = SimConfig(), seed: int = 0) -> Corpus:
    """Simulate games of scripted plays and return files in the ingest schema.

    Each play owns an independent child of ``SeedSequence(seed)``; the
    output is fully determined by ``(config, seed)``.
    """
    cfg = config
    root = np.random.SeedSequence(seed)
    game_seqs = root.spawn(cfg.n_games)
    teams = [TEAM_NAMES[i] for i in range(cfg.n_teams)]
    track_parts, play_rows, tackle_rows, oracle_rows, oframe_parts = [], [], [], [], []
    counts = {"plays": 0, "penalty": 0, "tackle_plays": 0, "penalty_free_tackle_plays": 0,
              "run": 0, "missed_tackles": 0, "dominant": 0, "touchdowns": 0}
    for g, gseq in enumerate(game_seqs):
        grng = np.random.default_rng(gseq)
        game_id = 2022000000 + g + 1
        week = g % cfg.n_weeks + 1
        h = g % cfg.n_teams
        a = (h + 1 + (g // cfg.n_teams) % (cfg.n_teams - 1)) % cfg.n_teams
        home, away = teams[h], teams[a]
        idx = {home: h, away: a}
        score = {home: 0, away: 0}
        poss, other = home, away
        los, down, ytg = 75.0, 1, 10.0
        drive = 1
        play_seqs = gseq.spawn(cfg.plays_per_game)
        for i in range(cfg.plays_per_game):
            rng = np.random.default_rng(play_seqs[i])
            play_id = 56 + 25 * i
            quarter = 1 + (4 * i) // cfg.plays_per_game
            play_type = "run" if rng.random() < cfg.run_fraction else "pass"
            u = rng.random()
            scenario = ("dominant" if u < cfg.dominant_rate else
                        "breakaway" if u < cfg.dominant_rate + cfg.breakaway_rate else "normal")
            off_ids, _ = team_roster(idx[poss])
            _, def_ids = team_roster(idx[other])
            play_los = los
            if scenario == "dominant":
                play_los = float(max(los, 35.0))
            script, res, cf = None, None, None
            for _attempt in range(20):
                script = make_script(play_los, play_type, scenario, off_ids, def_ids, cfg, rng)
                res = simulate_play(script)
                if scenario != "dominant":
                    break
                if res.tackler_id is not None:
                    cf = simulate_play(script, removed=res.tackler_id)
                    if cf.eopy <= res.eopy - 15.0:
                        break
            if res.tackler_id is not None and cf is None:
                cf = simulate_play(script, removed=res.tackler_id)
            direction = "left" if rng.random() < 0.5 else "right"
            penalty = rng.random() < cfg.penalty_rate
            tdf = _play_rows(game_id, play_id, res, script, (poss, other), direction)
            tdf = _round2(tdf, ["x", "y", "s", "a", "dis", "o", "dir"])
            track_parts.append(tdf)

            # oracle values from the rounded file contents
            cid = script.carrier_id
            end_frame = len(res.pos)
            eopy = _canonical_carrier_x(tdf, cid, end_frame)
            contact_pc = None
            if res.contact_frame is not None:
                contact_pc = _canonical_carrier_x(tdf, cid, res.contact_frame) - eopy
            cf_eopy = None
            if cf is not None:
                cf_canon = pd.DataFrame({"x": [cf.eopy], "y": [0.0], "o": [0.0], "dir": [0.0],
                                         "playDirection": [direction]})
                rx = float(np.round(_to_raw(cf_canon)["x"].iloc[0], 2))
                cf_eopy = float(canonicalize(pd.DataFrame({"x": [rx], "y": [HALF_WIDTH], "o": [0.0],
                                                           "dir": [0.0], "playDirection": [direction]}))["x"].iloc[0])
            c_rows = tdf[tdf["nflId"] == cid]
            cx = canonicalize(c_rows)["x"].to_numpy()
            fr = c_rows["frameId"].to_numpy()
            sel = fr >= res.possession_frame
            noise_free = cx[sel] - (eopy + script.pc_noise if res.contact_frame is not None
                                    and res.post_contact and res.post_contact > 0 else eopy)
            oframe_parts.append(pd.DataFrame({"gameId": game_id, "playId": play_id,
                                              "frameId": fr[sel],
                                              "true_expected_response": noise_free}))
            off_tos, def_tos = (int(v) for v in rng.integers(0, 4, 2))
            home_score, vis_score = score[home], score[away]
            gained = play_los - eopy
            play_rows.append({
                "gameId": game_id, "playId": play_id, "week": week, "quarter": quarter,
                "down": down, "yardsToGo": ytg,
                "absoluteYardlineNumber": (play_los + 10.0 if direction == "left" else 110.0 - play_los),
                "possessionTeam": poss, "defensiveTeam": other, "homeTeamAbbr": home,
                "preSnapHomeScore": home_score, "preSnapVisitorScore": vis_score,
                "offTimeoutsRemaining": off_tos, "defTimeoutsRemaining": def_tos,
                "penaltyYards": (float(rng.choice([-10, -5, 5, 10])) if penalty else np.nan),
                "playResult": int(round(gained)), "ballCarrierId": cid,
                "passResult": "C" if play_type == "pass" else np.nan,
                "playType": play_type, "driveId": drive,
            })
            for m in res.missed_ids:
                tackle_rows.append({"gameId": game_id, "playId": play_id, "nflId": m, "tackle": 0,
                                    "assist": 0, "forcedFumble": 0, "pff_missedTackle": 1})
            if res.tackler_id is not None:
                tackle_rows.append({"gameId": game_id, "playId": play_id, "nflId": res.tackler_id,
                                    "tackle": 1, "assist": 0, "forcedFumble": 0,
                                    "pff_missedTackle": 0})
            oracle_rows.append({
                "gameId": game_id, "playId": play_id, "scenario": scenario,
                "play_type": play_type, "end_kind": res.end_kind,
                "tackler_id": res.tackler_id, "contact_frame": res.contact_frame,
                "possession_frame": res.possession_frame, "end_frame": end_frame,
                "scripted_eopy": eopy, "true_counterfactual_eopy": cf_eopy,
                "scripted_post_contact": contact_pc, "penalty": bool(penalty),
                "n_missed": len(res.missed_ids),
            })
            counts["plays"] += 1
            counts["penalty"] += int(penalty)
            counts["run"] += int(play_type == "run")
            counts["missed_tackles"] += len(res.missed_ids)
            counts["dominant"] += int(scenario == "dominant")
            counts["touchdowns"] += int(res.end_kind == "touchdown")
            if res.tackler_id is not None:
                counts["tackle_plays"] += 1
                counts["penalty_free_tackle_plays"] += int(not penalty)

            # game flow
            if eopy <= 0.0:
                score[poss] += 7
                poss, other = other, poss
                los, down, ytg, drive = 75.0, 1, 10.0, drive + 1
            elif eopy >= 100.0:
                score[other] += 2
                poss, other = other, poss
                los, down, ytg, drive = 70.0, 1, 10.0, drive + 1
            elif gained >= ytg:
                los = float(np.clip(round(eopy), 1, 99))
                down, ytg = 1, float(min(10.0, los))
            elif down < 4:
                los = float(np.clip(round(eopy), 1, 99))
                down, ytg = down + 1, float(max(1.0, round(ytg - gained)))
                if down == 4 and los > 40:
                    # punt: not tracked, possession flips
                    poss, other = other, poss
                    los = float(np.clip(100 - (los - 40), 20, 80))
                    down, ytg, drive = 1, 10.0, drive + 1
            else:
                poss, other = other, poss
                los = float(np.clip(100 - round(eopy), 1, 99))
                down, ytg, drive = 1, float(min(10.0, los)), drive + 1

    tracking = pd.concat(track_parts, ignore_index=True)
    tracking["nflId"] = tracking["nflId"].astype("Int64")
    plays = pd.DataFrame(play_rows, columns=PLAYS_COLUMNS)
    tackles = pd.DataFrame(tackle_rows, columns=TACKLES_COLUMNS)
    players = []
    for t in range(cfg.n_teams):
        o, d = team_roster(t)
        players += [{"nflId": i, "position": p, "displayName": f"{teams[t]} {p} {i}"}
                    for i, p in zip(o, OFFENSE_POSITIONS)]
        players += [{"nflId": i, "position": p, "displayName": f"{teams[t]} {p} {i}"}
                    for i, p in zip(d, DEFENSE_POSITIONS)]
    players = pd.DataFrame(players, columns=PLAYERS_COLUMNS)
    oracle = pd.DataFrame(oracle_rows)
    oracle["tackler_id"] = oracle["tackler_id"].astype("Int64")
    oracle["contact_frame"] = oracle["contact_frame"].astype("Int64")
    summary = {"config": asdict(cfg), "seed": seed, "counts": counts}
    return Corpus(tracking[TRACKING_COLUMNS], plays, tackles, players, oracle,
                  pd.concat(oframe_parts, ignore_index=True), summary)
