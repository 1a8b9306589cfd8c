"""Command-line pipeline: ``tacklepep <stage> [--config PATH] [--seed N] [--jobs N]``.

Stages and what they read and write (relative to ``paths.work_dir`` unless
noted):

===========  =============================================  ==========================================
stage        reads                                          writes
===========  =============================================  ==========================================
simulate     (nothing)                                      data_dir: tracking, plays, tackles,
                                                            players, oracle, pbp CSVs
ingest       data_dir tracking/plays/tackles/players        features, contacts, tackle_frames,
                                                            plays_meta, players
fit-forest   features.csv                                   forest/week_*.tprf, forest_oos.csv,
                                                            forest_eval.json
fit-ep       pbp CSV                                        ep_model.bin, ep_cv.json
pep          contacts, plays_meta, forests, ep_model        pep_records.csv, densities.csv,
                                                            pep_by_*.csv
fit-mixed    pep_records.csv                                mixed_fit_*.json, wormplot_*.csv,
                                                            random_effects.csv
bootstrap    pep_records.csv, mixed_fit.json                bootstrap_intercepts.csv
rank         bootstrap_intercepts.csv, pep_records.csv      ranking.csv
report       all of the above                               report/*.csv
===========  =============================================  ==========================================

Every stage also writes ``manifests/<stage>.json``. Exit codes: 0 success,
1 usage or configuration error (including a missing upstream artifact),
2 data error, 3 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Mapping
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from tacklepep import io
from tacklepep.config import ConfigError, PipelineConfig, load_config
from tacklepep.ep_model import EpClassifier, fit_ep_classifier, load_pbp
from tacklepep.forest import ForestConfig, fit_weekly_folds, load_forest, save_forest
from tacklepep.gamlss.bootstrap import BootstrapDistribution, drive_bootstrap, rank_players
from tacklepep.gamlss.diagnostics import outside_band_fraction, quantile_residuals, wormplot_data
from tacklepep.gamlss.mixed import GROUPS, NonConvergence, fit_gamlss
from tacklepep.pep import aggregate_pep, check_identity, filter_run_plays, score_contacts
from tacklepep.synth.pbp import PbpConfig, generate_pbp_corpus, generator_parameters
from tacklepep.synth.tracking import SimConfig, generate_tracking_corpus
from tacklepep.tracking import (DataError, ParseError, build_contact_table, build_feature_table,
                                feature_names, parse_tracking)

logger = logging.getLogger("tacklepep")

STAGES = ("simulate", "ingest", "fit-forest", "fit-ep", "pep", "fit-mixed", "bootstrap", "rank",
          "report")
FAMILY_ORDER = ("normal", "TF", "SST")
FULL = "%.17g"  # lossless float text for artifacts read by later stages


class MissingArtifact(Exception):
    """An upstream artifact is absent; the message names the stage to run."""


def _need(path: Path, what: str, stage: str) -> Path:
    if not path.exists():
        raise MissingArtifact(f"{what} not found; run {stage}")
    return path


class _LazyForests(Mapping):
    """week -> fold forest, loading from disk on demand and keeping one in memory."""

    def __init__(self, paths: dict):
        self._paths = paths
        self._cache = {}

    def __getitem__(self, week):
        if week not in self._cache:
            self._cache.clear()
            self._cache[week] = load_forest(self._paths[week])
        return self._cache[week]

    def __iter__(self):
        return iter(sorted(self._paths))

    def __len__(self):
        return len(self._paths)

    def __contains__(self, week):
        return week in self._paths


def _forest_paths(work: Path) -> dict:
    d = work / "forest"
    files = sorted(d.glob("week_*.tprf")) if d.is_dir() else []
    if not files:
        raise MissingArtifact("forest model not found; run fit-forest")
    return {int(p.stem.split("_")[1]): p for p in files}


def _manifest(cfg: PipelineConfig, stage, inputs, outputs, extra=None):
    io.write_manifest(cfg.work_dir / "manifests" / f"{stage}.json", stage, cfg.hashable(),
                      cfg.seed, inputs, outputs, extra)


def _write_json(path, obj):
    io.atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _read_records(work: Path, cfg: PipelineConfig, for_model=True) -> pd.DataFrame:
    path = _need(work / "pep_records.csv", "PEP records", "pep")
    rec = pd.read_csv(path, keep_default_na=False, na_values=[""])
    if for_model:
        mcfg = cfg.section("mixed")
        if mcfg["include_missed"]:
            mpath = _need(work / "missed_records.csv", "missed-tackle records", "pep")
            rec = pd.concat([rec, pd.read_csv(mpath, keep_default_na=False, na_values=[""])],
                            ignore_index=True)
        if mcfg["run_plays_only"]:
            rec = filter_run_plays(rec).reset_index(drop=True)
    for c in ("pass_result", "tackler_position", "ball_carrier_position"):
        if c in rec:
            rec[c] = rec[c].fillna("").astype(str)
    if len(rec) == 0:
        raise DataError("no PEP records to model")
    return rec


# -- stages ------------------------------------------------------------------

def stage_simulate(cfg: PipelineConfig):
    s = cfg.section("simulate")
    sim = SimConfig(n_games=s["n_games"], plays_per_game=s["plays_per_game"], n_teams=s["n_teams"],
                    run_fraction=s["run_fraction"], penalty_rate=s["penalty_rate"],
                    missed_tackle_rate=s["missed_tackle_rate"], dominant_rate=s["dominant_rate"],
                    breakaway_rate=s["breakaway_rate"], noise_sd=s["noise_sd"])
    corpus = generate_tracking_corpus(sim, seed=cfg.seed)
    paths = corpus.write(cfg.data_dir)
    pbp = generate_pbp_corpus(PbpConfig(s["pbp_seasons"], s["pbp_rows_per_season"]), seed=cfg.seed + 1)
    paths["pbp"] = cfg.data_dir / "pbp.csv"
    io.write_csv(pbp, paths["pbp"])
    paths["pbp_generator"] = cfg.data_dir / "pbp_generator.json"
    _write_json(paths["pbp_generator"], generator_parameters())
    _manifest(cfg, "simulate", [], paths.values(), {"corpus": corpus.summary})
    logger.info("simulated %d plays into %s", corpus.summary["counts"]["plays"], cfg.data_dir)


def stage_ingest(cfg: PipelineConfig):
    dd = cfg.data_dir
    files = {k: _need(dd / f"{k}.csv", f"{k} file", "simulate")
             for k in ("tracking", "plays", "tackles")}
    players_file = dd / "players.csv"
    data = parse_tracking(files["tracking"], files["plays"], files["tackles"],
                          players_file if players_file.exists() else None)
    k = cfg.section("ingest")["k_players"]
    work = cfg.work_dir
    feats = build_feature_table(data, k)
    contacts = build_contact_table(data, k)
    if len(contacts) == 0:
        raise DataError("no tackle plays with a usable contact frame")
    out = {"features": work / "features.csv", "contacts": work / "contacts.csv",
           "plays_meta": work / "plays_meta.csv", "invalid": work / "invalid_plays.csv"}
    io.write_csv(feats, out["features"], FULL)
    io.write_csv(contacts, out["contacts"], FULL)
    out["tackle_frames"] = work / "tackle_frames.csv"
    idx = contacts.loc[contacts["scenario"] == "real", ["game_id", "play_id", "defender_id", "frame_id"]]
    io.write_csv(idx.rename(columns={"defender_id": "tackler_id"}), out["tackle_frames"])
    if cfg.section("pep")["missed_tackles"]:
        out["missed_contacts"] = work / "missed_contacts.csv"
        io.write_csv(build_contact_table(data, k, missed=True), out["missed_contacts"], FULL)
    meta = data.plays.reset_index(drop=True).copy()
    meta["missed_tackler_ids"] = meta["missed_tackler_ids"].map(
        lambda v: ";".join(str(int(x)) for x in v) if isinstance(v, (list, tuple)) else "")
    io.write_csv(meta, out["plays_meta"], FULL)
    if data.players is not None:
        out["players"] = work / "players.csv"
        io.write_csv(data.players, out["players"])
    io.write_csv(pd.DataFrame(data.invalid, columns=["game_id", "play_id", "reason"]), out["invalid"])
    _manifest(cfg, "ingest", files.values(), out.values(),
              {"n_plays": int(len(meta)), "n_frames": int(len(feats)),
               "n_contacts": int((contacts["scenario"] == "real").sum()),
               "n_invalid": len(data.invalid)})
    logger.info("ingested %d plays, %d frame rows", len(meta), len(feats))


def stage_fit_forest(cfg: PipelineConfig):
    work = cfg.work_dir
    fpath = _need(work / "features.csv", "feature table", "ingest")
    table = pd.read_csv(fpath)
    fc = cfg.section("forest")
    names = feature_names(cfg.section("ingest")["k_players"])
    conf = ForestConfig(n_trees=fc["n_trees"], mtry=fc["mtry"], min_node_size=fc["min_node_size"],
                        n_jobs=cfg.jobs)
    weeks = sorted(int(w) for w in table["week"].unique())
    outputs, oos, per_fold = [], [], []
    for w in weeks:
        # one fold at a time keeps a single forest in memory
        (fold,) = fit_weekly_folds(table, names, conf, master_seed=cfg.seed, weeks=[w],
                                   frame_stride=fc["frame_stride"]) or (None,)
        if fold is None:
            continue
        path = work / "forest" / f"week_{w}.tprf"
        save_forest(fold.forest, path)
        outputs.append(path)
        part = table.iloc[fold.eval_keys][["game_id", "play_id", "frame_id", "week", "response"]].copy()
        part["prediction"] = fold.predictions
        oos.append(part)
        per_fold.append({"week": w, "n_train": fold.n_train, "n_eval": int(len(fold.eval_keys)),
                         "rmse": fold.rmse, "mae": fold.mae})
        del fold
    if not per_fold:
        raise DataError("no week had both training and evaluation rows")
    oos_df = pd.concat(oos, ignore_index=True)
    rmse = [f["rmse"] for f in per_fold]
    mae = [f["mae"] for f in per_fold]
    summary = {"rmse": float(np.mean(rmse)), "mae": float(np.mean(mae)),
               "rmse_sd": float(np.std(rmse, ddof=1)) if len(rmse) > 1 else 0.0,
               "mae_sd": float(np.std(mae, ddof=1)) if len(mae) > 1 else 0.0,
               "per_fold": per_fold}
    io.write_csv(oos_df, work / "forest_oos.csv", FULL)
    _write_json(work / "forest_eval.json", summary)
    _manifest(cfg, "fit-forest", [fpath], outputs + [work / "forest_oos.csv", work / "forest_eval.json"])
    logger.info("forest folds: rmse %.3f mae %.3f", summary["rmse"], summary["mae"])


def stage_fit_ep(cfg: PipelineConfig):
    p = cfg.raw["paths"]["pbp"]
    path = cfg.path("pbp") if p else _need(cfg.data_dir / "pbp.csv", "play-by-play file", "simulate")
    rows = load_pbp(path)
    e = cfg.section("ep")
    clf = fit_ep_classifier(rows, grid=e["grid"], weighting=e["weighting"], seed=cfg.seed,
                            n_jobs=cfg.jobs)
    work = cfg.work_dir
    clf.save(work / "ep_model.bin")
    _write_json(work / "ep_cv.json", clf.meta)
    _manifest(cfg, "fit-ep", [path], [work / "ep_model.bin", work / "ep_cv.json"])


def stage_pep(cfg: PipelineConfig):
    work = cfg.work_dir
    fpaths = _forest_paths(work)
    contacts_p = _need(work / "contacts.csv", "contact table", "ingest")
    meta_p = _need(work / "plays_meta.csv", "play metadata", "ingest")
    ep_p = _need(work / "ep_model.bin", "EP model", "fit-ep")
    clf = EpClassifier.load(ep_p)
    meta = pd.read_csv(meta_p, keep_default_na=False, na_values=[""])
    players_p = work / "players.csv"
    players = pd.read_csv(players_p) if players_p.exists() else None
    forests = _LazyForests(fpaths)
    names = feature_names(cfg.section("ingest")["k_players"])
    draws = []
    rec = score_contacts(pd.read_csv(contacts_p), meta, forests, clf, names, players, draws_out=draws)
    err = check_identity(rec)
    out = {"records": work / "pep_records.csv", "densities": work / "densities.csv"}
    io.write_csv(rec, out["records"], FULL)
    dens = pd.concat(draws, ignore_index=True).sort_values(
        ["game_id", "play_id", "tackler_id", "scenario", "draw_index"], kind="stable")
    io.write_csv(dens, out["densities"], FULL)
    inputs = [contacts_p, meta_p, ep_p, *fpaths.values()]
    if cfg.section("pep")["missed_tackles"]:
        mc = _need(work / "missed_contacts.csv", "missed-tackle contact table", "ingest")
        missed = score_contacts(pd.read_csv(mc), meta, forests, clf, names, players, source="missed")
        out["missed"] = work / "missed_records.csv"
        io.write_csv(missed, out["missed"], FULL)
        inputs.append(mc)
    out["by_player"] = work / "pep_by_player.csv"
    out["by_position"] = work / "pep_by_position.csv"
    io.write_csv(aggregate_pep(rec, "tackler_id"), out["by_player"], FULL)
    io.write_csv(aggregate_pep(rec, "tackler_position"), out["by_position"], FULL)
    _manifest(cfg, "pep", inputs, out.values(), {"n_records": int(len(rec)), "identity_error": err})
    logger.info("scored %d tackles; identity error %.2g", len(rec), err)


def stage_fit_mixed(cfg: PipelineConfig):
    work = cfg.work_dir
    rec = _read_records(work, cfg)
    m = cfg.section("mixed")
    chosen = m["family"]
    outputs, fits, summary = [], {}, {}
    for fam in FAMILY_ORDER:
        fit = fit_gamlss(rec, family=fam, tol=m["tol"], max_iter=m["max_iter"])
        fits[fam] = fit
        rep = fit.to_report()
        resid = quantile_residuals(fit, rec)
        worm = wormplot_data(resid)
        rep["wormplot_outside_band"] = outside_band_fraction(worm)
        p_json = work / f"mixed_fit_{fam}.json"
        p_worm = work / f"wormplot_{fam}.csv"
        _write_json(p_json, rep)
        io.write_csv(worm, p_worm, FULL)
        outputs += [p_json, p_worm]
        summary[fam] = {"objective": fit.objective, "converged": fit.converged,
                        "outside_band": rep["wormplot_outside_band"]}
    best = fits[chosen]
    effects = []
    for gname, _ in GROUPS:
        s = best.effects[gname]
        effects.append(pd.DataFrame({"grouping": gname, "level": s.index.astype(str), "intercept": s.to_numpy()}))
    io.write_csv(pd.concat(effects, ignore_index=True), work / "random_effects.csv", FULL)
    _write_json(work / "mixed_fit.json", {"family": chosen, **best.to_report(), "comparison": summary})
    outputs += [work / "random_effects.csv", work / "mixed_fit.json"]
    _manifest(cfg, "fit-mixed", [work / "pep_records.csv"], outputs, {"families": summary})
    if not best.converged:
        raise NonConvergence(f"{chosen} mixed model did not converge within {m['max_iter']} iterations")


def stage_bootstrap(cfg: PipelineConfig):
    work = cfg.work_dir
    rec = _read_records(work, cfg)
    fitp = _need(work / "mixed_fit.json", "mixed model fit", "fit-mixed")
    m = cfg.section("mixed")
    ref = json.loads(fitp.read_text()).get("reference_levels") or None
    bs = drive_bootstrap(rec, B=cfg.section("bootstrap")["B"], seed=cfg.seed, family=m["family"],
                         n_jobs=cfg.jobs, tol=m["tol"], max_iter=m["max_iter"], reference=ref)
    out = work / "bootstrap_intercepts.csv"
    io.write_csv(bs.long(), out, FULL)
    summ = work / "bootstrap_summary.json"
    _write_json(summ, {"B": bs.n_requested, "succeeded": int(len(bs.intercepts)),
                       "failed": bs.failed, "flagged": bs.flagged})
    _manifest(cfg, "bootstrap", [work / "pep_records.csv", fitp], [out, summ])
    if bs.flagged:
        logger.warning("fewer than 90 percent of bootstrap replicates succeeded")


def _load_bootstrap(work: Path, rec: pd.DataFrame) -> BootstrapDistribution:
    p = _need(work / "bootstrap_intercepts.csv", "bootstrap intercepts", "bootstrap")
    long = pd.read_csv(p, dtype={"tackler_id": str})
    inter = long.pivot(index="replicate", columns="tackler_id", values="intercept")
    n_t = rec.groupby(rec["tackler_id"].astype(str)).size().reindex(inter.columns)
    summ = work / "bootstrap_summary.json"
    info = json.loads(summ.read_text()) if summ.exists() else {}
    return BootstrapDistribution(inter, n_t, info.get("B", len(inter)), info.get("failed", []),
                                 info.get("flagged", False))


def stage_rank(cfg: PipelineConfig):
    work = cfg.work_dir
    rec = _read_records(work, cfg)
    bs = _load_bootstrap(work, rec)
    pp = work / "players.csv"
    names = pd.read_csv(pp) if pp.exists() else None
    if names is not None and "displayName" not in names:
        names = None
    tab = rank_players(bs, rec, cfg.section("rank")["min_tackles"], names)
    out = work / "ranking.csv"
    io.write_csv(tab, out, FULL)
    _manifest(cfg, "rank", [work / "pep_records.csv", work / "bootstrap_intercepts.csv"], [out])
    logger.info("ranked %d players", len(tab))


def _density_curve(values, grid):
    v = np.asarray(values, dtype=float)
    if len(v) > 1 and np.ptp(v) > 0:
        return stats.gaussian_kde(v)(grid)
    # a point mass: spread it over the nearest grid cell
    out = np.zeros(len(grid))
    width = grid[1] - grid[0]
    out[int(np.argmin(np.abs(grid - v[0])))] = 1.0 / width
    return out


def _grid(values, n):
    lo, hi = float(np.min(values)), float(np.max(values))
    pad = max(1.0, 0.1 * (hi - lo))
    return np.linspace(lo - pad, hi + pad, n)


def stage_report(cfg: PipelineConfig):
    work = cfg.work_dir
    rep = work / "report"
    r = cfg.section("report")
    rec = _read_records(work, cfg, for_model=False)
    contacts_p = _need(work / "contacts.csv", "contact table", "ingest")
    fpaths = _forest_paths(work)
    if r["play"] is None:
        i = int(np.argmax(rec["pep"].to_numpy()))
        gid, pid = int(rec["game_id"].iloc[i]), int(rec["play_id"].iloc[i])
    else:
        gid, pid = (int(x) for x in r["play"].split(":"))
    row = rec[(rec["game_id"] == gid) & (rec["play_id"] == pid)]
    if row.empty:
        raise DataError(f"report.play {gid}:{pid} has no PEP record")
    row = row.iloc[0]
    week = int(row["week"])
    if week not in fpaths:
        raise MissingArtifact(f"forest for week {week} not found; run fit-forest")
    forest = load_forest(fpaths[week])
    contacts = pd.read_csv(contacts_p)
    c = contacts[(contacts["game_id"] == gid) & (contacts["play_id"] == pid)
                 & (contacts["defender_id"] == int(row["tackler_id"]))]
    names = feature_names(cfg.section("ingest")["k_players"])
    draws = {}
    for scen in ("real", "removed"):
        cr = c[c["scenario"] == scen]
        X = cr[names].to_numpy(float)
        if forest.stats is not None:
            X = forest.stats.apply(X)
        draws[scen] = float(cr["carrier_x_raw"].iloc[0]) - forest.tree_predictions(X)[0]
    grid = _grid(np.concatenate(list(draws.values())), r["bins"])
    curves = pd.concat([pd.DataFrame({"scenario": s, "eopy": grid, "density": _density_curve(d, grid)})
                        for s, d in draws.items()], ignore_index=True)
    draw_tab = pd.concat([pd.DataFrame({"scenario": s, "tree": np.arange(len(d)), "eopy": d})
                          for s, d in draws.items()], ignore_index=True)
    outputs = {"curves": rep / "density_curves.csv", "draws": rep / "density_draws.csv",
               "play": rep / "play.json"}
    io.write_csv(curves, outputs["curves"], FULL)
    io.write_csv(draw_tab, outputs["draws"], FULL)
    _write_json(outputs["play"], {"game_id": gid, "play_id": pid, "week": week,
                                  "tackler_id": int(row["tackler_id"]),
                                  **{k: float(row[k]) for k in ("pep", "pep_alt", "ep_hyp",
                                                                "ep_real_pred", "ep_real_obs")}})
    inputs = [work / "pep_records.csv", contacts_p, fpaths[week]]
    # bootstrap densities of the top-ranked players, when available
    rank_p = work / "ranking.csv"
    if rank_p.exists() and (work / "bootstrap_intercepts.csv").exists():
        top = pd.read_csv(rank_p, dtype={"player": str})["player"].head(r["top_players"]).tolist()
        long = pd.read_csv(work / "bootstrap_intercepts.csv", dtype={"tackler_id": str})
        if not top:
            # nobody passed the tackle filter: fall back to the bootstrap medians
            med = long.groupby("tackler_id")["intercept"].median()
            top = med.sort_values(ascending=False, kind="stable").index[:r["top_players"]].tolist()
        parts = []
        for pl in top:
            v = long.loc[long["tackler_id"] == pl, "intercept"].to_numpy()
            g = _grid(v, r["bins"])
            parts.append(pd.DataFrame({"player": pl, "intercept": g, "density": _density_curve(v, g)}))
        if parts:
            outputs["bootstrap"] = rep / "bootstrap_density.csv"
            io.write_csv(pd.concat(parts, ignore_index=True), outputs["bootstrap"], FULL)
            inputs += [rank_p, work / "bootstrap_intercepts.csv"]
    worms = [work / f"wormplot_{f}.csv" for f in FAMILY_ORDER if (work / f"wormplot_{f}.csv").exists()]
    if worms:
        w = pd.concat([pd.read_csv(p).assign(family=p.stem.split("_", 1)[1]) for p in worms],
                      ignore_index=True)
        outputs["wormplot"] = rep / "wormplot.csv"
        io.write_csv(w, outputs["wormplot"], FULL)
        inputs += worms
    _manifest(cfg, "report", inputs, outputs.values(), {"play": f"{gid}:{pid}"})


RUNNERS = {
    "simulate": stage_simulate, "ingest": stage_ingest, "fit-forest": stage_fit_forest,
    "fit-ep": stage_fit_ep, "pep": stage_pep, "fit-mixed": stage_fit_mixed,
    "bootstrap": stage_bootstrap, "rank": stage_rank, "report": stage_report,
}


def run_stage(stage: str, config: PipelineConfig) -> int:
    """Run one stage; return the process exit code."""
    try:
        RUNNERS[stage](config)
    except (ConfigError, MissingArtifact) as exc:
        logger.error("%s", exc)
        return 1
    except NonConvergence as exc:
        logger.error("%s", exc)
        return 3
    except (ParseError, DataError, pd.errors.ParserError, pd.errors.EmptyDataError,
            ValueError, KeyError) as exc:
        logger.error("data error: %s", exc)
        return 2
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tacklepep", description="Tackle value pipeline.")
    p.add_argument("stage", choices=STAGES)
    p.add_argument("--config", metavar="PATH", help="YAML pipeline config")
    p.add_argument("--seed", type=int, metavar="N", help="override the config seed")
    p.add_argument("--jobs", type=int, metavar="N", help="parallel workers")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, jobs=args.jobs)
    except ConfigError as exc:
        logger.error("config: %s", exc)
        return 1
    return run_stage(args.stage, cfg)


if __name__ == "__main__":
    sys.exit(main())
