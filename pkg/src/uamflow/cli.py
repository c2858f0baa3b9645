"""Command-line entry point: ingest, train, eval, simulate, report.

Every subcommand takes `--config <json> --seed <int> --out <dir>`, validates
the config completely before touching the output directory, and finishes by
writing a run manifest listing every artifact. All randomness derives from
the single --seed flag.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import evalkit
from . import sim as simulation
from . import trajdata as td
from . import train as training
from .errors import ConfigError, MalformedInputError, UamflowError
from .geo import GeoPoint

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_CONFIG = 4
EXIT_BAD_DATA = 5
EXIT_FAILURE = 6


def _require(cfg: dict, key: str, kind=None):
    if key not in cfg:
        raise ConfigError(f"config missing required key {key!r}")
    value = cfg[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"config key {key!r} must be {kind}, got {type(value).__name__}")
    return value


def _geopoint(d: dict, where: str) -> GeoPoint:
    try:
        return GeoPoint(float(d["lon"]), float(d["lat"]), float(d.get("alt", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: expected {{lon, lat[, alt]}}, got {d!r}") from exc


def _existing_path(value: str, what: str) -> Path:
    path = Path(value)
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _write_manifest(out_dir: Path, command: str, config_path: str, seed: int,
                    artifacts: list[str], started: str):
    manifest = {
        "command": command,
        "config_path": str(config_path),
        "config_sha256": hashlib.sha256(Path(config_path).read_bytes()).hexdigest(),
        "seed": seed,
        "version": __version__,
        "artifacts": sorted(artifacts),
        "started_utc": started,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
    }
    path = out_dir / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")
    return path


def _synthetic_config(cfg: dict) -> simulation.SyntheticTrafficConfig:
    procedures = []
    for p in _require(cfg, "procedures", list):
        procedures.append(simulation.ProcedureConfig(
            name=_require(p, "name", str),
            kind=_require(p, "kind", str),
            waypoints=[(float(w[0]), float(w[1]), float(w[2])) for w in _require(p, "waypoints", list)],
            speed_start=float(p.get("speed_start", 80.0)),
            speed_cruise=float(p.get("speed_cruise", 110.0)),
            speed_end=float(p.get("speed_end", 70.0)),
            accel=float(p.get("accel", 1.0)),
            rate_per_hour=float(p.get("rate_per_hour", 12.0)),
        ))
    return simulation.SyntheticTrafficConfig(
        procedures=procedures,
        lateral_sigma_m=float(cfg.get("lateral_sigma_m", 300.0)),
        vertical_sigma_m=float(cfg.get("vertical_sigma_m", 50.0)),
        speed_jitter=float(cfg.get("speed_jitter", 0.05)),
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(cfg: dict, seed: int, out_dir: Path) -> list[str]:
    source = _require(cfg, "source", str)
    if source == "csv":
        csv_path = _existing_path(_require(cfg, "csv_path", str), "trajectory CSV")
        trajs = td.read_trajectory_csv(csv_path)
        extra = []
    elif source == "synthetic":
        syn = _require(cfg, "synthetic", dict)
        origin = _geopoint(_require(syn, "origin", dict), "synthetic.origin")
        duration = float(syn.get("duration_s", 7200.0))
        rng = np.random.Generator(np.random.PCG64(seed))
        trajs = simulation.generate_synthetic_traffic(_synthetic_config(syn), duration, origin, rng)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_out = out_dir / "synthetic_traffic.csv"
        td.write_trajectory_csv(csv_out, trajs)
        extra = [csv_out.name]
    else:
        raise ConfigError(f"ingest source must be csv or synthetic, got {source!r}")

    ds = td.build_dataset(
        trajs, seed=seed,
        h=int(cfg.get("h", td.OBS_HORIZON)),
        t=int(cfg.get("t", td.PRED_HORIZON)),
        min_alt_m=float(cfg.get("min_alt_m", td.GROUND_ALT_M)),
    )
    paths = td.save_dataset(ds, out_dir)
    counts = ds.counts()
    print(f"ingested {len(trajs)} trajectories -> windows {counts}")
    return [Path(p).name for p in paths.values()] + extra


def cmd_train(cfg: dict, seed: int, out_dir: Path) -> list[str]:
    dataset_dir = _existing_path(_require(cfg, "dataset_dir", str), "dataset directory")
    kind = _require(cfg, "model", str)
    if kind not in training.MODEL_KINDS:
        raise ConfigError(f"model must be one of {sorted(training.MODEL_KINDS)}, got {kind!r}")
    input_mode = _require(cfg, "input_mode", str)
    if input_mode not in td.INPUT_MODES:
        raise ConfigError(f"input_mode must be one of {td.INPUT_MODES}, got {input_mode!r}")
    ds = td.load_dataset(dataset_dir)
    if not ds.train or not ds.val:
        raise MalformedInputError("dataset has empty train or validation split")

    h = ds.train[0].x.shape[0]
    t = ds.train[0].y.shape[0]
    dims = {"input_mode": input_mode, "h_horizon": h, "t_horizon": t, "seed": seed}
    user_dims = cfg.get("dims", {})
    allowed = {"flow": ("hidden", "enc_layers", "flow_layers", "coupling_hidden", "clamp"),
               "gru": ("hidden", "enc_layers"),
               "mlp": ("hidden", "enc_layers", "mlp_hidden")}[kind]
    for key in user_dims:
        if key not in allowed:
            raise ConfigError(f"dims.{key} is not a parameter of model {kind!r}")
    dims.update(user_dims)

    tc = cfg.get("train", {})
    config = training.TrainConfig(
        batch_size=int(tc.get("batch_size", 64)),
        learning_rate=float(tc.get("learning_rate", 1e-3)),
        epochs=int(tc.get("epochs", 100)),
        seed=seed,
        clip_norm=float(tc.get("clip_norm", 5.0)),
        momentum=float(tc.get("momentum", 0.9)),
        objective="nll" if kind == "flow" else "mse",
    )
    model = training.build_model(kind, ds.stats, dims)
    checkpoint = training.fit(model, ds.train, ds.val, config)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "checkpoint.json"
    checkpoint.save(ckpt_path)
    print(f"trained {kind} ({input_mode}): best val {checkpoint.val_score:.6f} "
          f"at epoch {checkpoint.config['best_epoch']}/{config.epochs}")
    return [ckpt_path.name]


def cmd_eval(cfg: dict, seed: int, out_dir: Path) -> list[str]:
    dataset_dir = _existing_path(_require(cfg, "dataset_dir", str), "dataset directory")
    ckpt_paths = [Path(p) for p in _require(cfg, "checkpoints", list)]
    for p in ckpt_paths:
        _existing_path(p, "checkpoint")
    k = int(cfg.get("k", 100))
    limit = cfg.get("limit")
    ds = td.load_dataset(dataset_dir)
    split = cfg.get("split", "test")
    if split not in ("train", "val", "test"):
        raise ConfigError(f"split must be train, val, or test, got {split!r}")
    pairs = getattr(ds, split)
    if limit is not None:
        pairs = pairs[: int(limit)]
    if not pairs:
        raise MalformedInputError(f"no pairs in split {split!r}")

    rows = []
    for p in ckpt_paths:
        model = training.Checkpoint.load(p).to_model()
        rows.append(evalkit.evaluate(pairs, model, k=k, seed=seed))
        print(f"{rows[-1]['model']}/{rows[-1]['input_config']}: "
              f"minADE {rows[-1]['minADE_m']:.1f} m, minFDE {rows[-1]['minFDE_m']:.1f} m")
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.csv"
    evalkit.write_metrics_csv(metrics_path, rows)
    return [metrics_path.name]


def cmd_simulate(cfg: dict, seed: int, out_dir: Path) -> list[str]:
    sc = _require(cfg, "scenario", dict)
    origin = _geopoint(_require(sc, "origin", dict), "scenario.origin")
    source = _require(sc, "source", str)
    scenario_kwargs = {
        "origin": origin,
        "duration_s": float(sc.get("duration_s", simulation.DEFAULT_DURATION_S)),
        "uam_interval_s": float(sc.get("uam_interval_s", simulation.UAM_DEPARTURE_INTERVAL_S)),
        "source": source,
        "seed": seed,
    }
    if source == "synthetic":
        scenario_kwargs["synthetic"] = _synthetic_config(_require(sc, "synthetic", dict))
    elif source == "replay":
        scenario_kwargs["replay_path"] = str(_existing_path(_require(sc, "replay_path", str), "replay CSV"))
    scenario = simulation.TrafficScenario(**scenario_kwargs)

    lanes = []
    for entry in _require(cfg, "lanes", list):
        lanes.append(simulation.Lane(
            id=_require(entry, "id", str),
            origin=_geopoint(_require(entry, "origin", dict), "lane.origin"),
            dest=_geopoint(_require(entry, "dest", dict), "lane.dest"),
            altitude_ft=float(_require(entry, "altitude_ft", (int, float))),
        ))
    modes = _require(cfg, "modes", list)
    for mode in modes:
        if mode not in ("baseline", "adjusted"):
            raise ConfigError(f"modes entries must be baseline or adjusted, got {mode!r}")

    predictor_kind = cfg.get("predictor", "checkpoint")
    checkpoint = None
    if "adjusted" in modes:
        if predictor_kind == "checkpoint":
            checkpoint = training.Checkpoint.load(
                _existing_path(_require(cfg, "checkpoint", str), "checkpoint"))
        elif predictor_kind != "truth":
            raise ConfigError(f"predictor must be checkpoint or truth, got {predictor_kind!r}")

    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for lane in lanes:
        for mode in modes:
            predictor = "truth" if (mode == "adjusted" and predictor_kind == "truth") else None
            result = simulation.run(scenario, lane, mode, checkpoint=checkpoint,
                                    seed=seed, predictor=predictor)
            name = f"result_{lane.id}_{lane.altitude_ft:g}ft_{mode}.json"
            result.save(out_dir / name)
            artifacts.append(name)
            seps = [f.min_sep_m for f in result.flights if f.min_sep_m is not None]
            min_sep = f"{min(seps):.0f} m" if seps else "n/a"
            print(f"{lane.id} @ {lane.altitude_ft:g} ft [{mode}]: {result.completed}/{result.spawned} "
                  f"flights, min sep {min_sep}")
    return artifacts


def cmd_report(cfg: dict, seed: int, out_dir: Path) -> list[str]:
    result_paths = [_existing_path(p, "result file") for p in _require(cfg, "results", list)]
    if not result_paths:
        raise ConfigError("report needs at least one result file")
    results = [simulation.SimResult.load(p) for p in result_paths]
    paths = simulation.report(results, out_dir)
    print(f"report bundle written for {len(results)} runs")
    return [Path(p).name for p in paths.values()]


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eval": cmd_eval,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uamflow",
        description="Probabilistic trajectory prediction and UAM speed-adjustment simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=0, help="master random seed")
        p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = datetime.now(timezone.utc).isoformat()
    try:
        config_path = _existing_path(args.config, "config file")
        try:
            cfg = json.loads(config_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config root must be a JSON object")
        out_dir = Path(args.out)
        artifacts = COMMANDS[args.command](cfg, args.seed, out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_manifest(out_dir, args.command, config_path, args.seed, artifacts, started)
        return EXIT_OK
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except MalformedInputError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_BAD_DATA
    except UamflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
