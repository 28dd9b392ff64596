"""Command-line entry point: ``m2pkit <subcommand> ...``.

Settings resolve as command-line flag, then the matching key in the
``--config`` JSON file (top level or a section named after the
subcommand), then the built-in default.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import ar, evaluation, latency, predictor, probe, synth
from .errors import ConfigError, M2PError
from .trace import DEFAULT_PERIOD_MS, load_trace, load_uniform, resample, save_trace

DEFAULTS = {
    "period_ms": DEFAULT_PERIOD_MS,
    "format": "csv",
    "time_scale": 1.0,
    "kind": "head",
    "count": 1,
    "duration_ms": None,
    "rho": ar.DEFAULT_LAG_ORDER,
    "aic": None,
    "lat_ms": 40.0,
    "lats": list(evaluation.DEFAULT_LATS_MS),
    "frame_interval_ms": 10.0,
    "workers": 1,
    "seed": 0,
    "encoder": None,
    "refresh_hz": None,
    "display_mode": "average",
    "listen": "127.0.0.1:9000",
    "connect": "127.0.0.1:9000",
    "fps": 60.0,
    "proc_delay_ms": 0.0,
    "up_delay_ms": 0.0,
    "down_delay_ms": 0.0,
    "n": 100,
    "repaint_hz": 60.0,
    "gap_ms": 50.0,
    "timeout_ms": 5000.0,
    "recv_delay_ms": 0.0,
}

BUDGET_FIELDS = ("t_rend", "t_enc", "t_up", "t_down", "t_trans", "t_dec", "t_disp")


class Settings:
    def __init__(self, args: argparse.Namespace, config: dict):
        self.args = args
        self.section = {**{k: v for k, v in config.items() if not isinstance(v, dict)},
                        **config.get(args.command, {})}

    def __getattr__(self, key):
        value = getattr(self.args, key, None)
        if value is not None:
            return value
        key_dash = key.replace("_", "-")
        for k in (key, key_dash):
            if k in self.section:
                return self.section[k]
        return DEFAULTS.get(key)


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _require_out(s: Settings, what: str) -> Path:
    if not s.out:
        raise ConfigError(f"{what} needs --out")
    return Path(s.out)


def cmd_ingest(s: Settings) -> int:
    paths = s.paths or []
    if not paths:
        raise ConfigError("ingest needs at least one input trace")
    out_dir = Path(s.out) if s.out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    for p in map(Path, paths):
        raw = load_trace(p, format=s.format, time_scale=s.time_scale if s.time_scale == "auto" else float(s.time_scale))
        uniform = resample(raw, float(s.period_ms))
        dest = (out_dir or p.parent) / f"{p.stem}.uniform.csv"
        save_trace(uniform, dest)
        print(f"{p} -> {dest} ({len(raw)} raw samples, {len(uniform)} at {s.period_ms} ms)")
    return 0


def cmd_synth(s: Settings) -> int:
    out = _require_out(s, "synth")
    count = int(s.count)
    seed = int(s.seed)
    if count == 1 and out.suffix:
        targets = [(seed, out)]
    else:
        out.mkdir(parents=True, exist_ok=True)
        targets = [(seed + k, out / f"{s.kind}_{seed + k}.csv") for k in range(count)]
    for sd, path in targets:
        tr = synth.generate(s.kind, seed=sd, duration_ms=s.duration_ms, period_ms=float(s.period_ms),
                            source_id=path.stem)
        save_trace(tr, path)
        print(f"wrote {path} ({len(tr)} samples)")
    return 0


def cmd_train(s: Settings) -> int:
    out = _require_out(s, "train")
    trace = load_uniform(s.trace)
    if s.aic is not None:
        rho = ar.select_lag_aic(trace.channel("x"), int(s.aic))
        print(f"AIC selected lag order {rho} (searched 1..{s.aic})")
    else:
        rho = int(s.rho)
    config = predictor.PredictionConfig(
        history_window_ms=rho * trace.period_ms, frame_interval_ms=trace.period_ms,
        lat_ms=trace.period_ms, sample_period_ms=trace.period_ms,
    )
    models = predictor.train_default_models(trace, config, per_channel=bool(s.per_channel))
    models.save(out)
    print(json.dumps({"rho": models.rho, "trans_trained_on": models.trans_model.trained_on,
                      "rot_trained_on": models.rot_model.trained_on, "out": str(out)}))
    return 0


def _prediction_config(models: predictor.ModelPair, period_ms: float, s: Settings,
                       lat_ms: float) -> predictor.PredictionConfig:
    return predictor.PredictionConfig(
        history_window_ms=models.rho * period_ms, lat_ms=float(lat_ms),
        frame_interval_ms=float(s.frame_interval_ms), sample_period_ms=period_ms,
    )


def cmd_predict(s: Settings) -> int:
    out = _require_out(s, "predict")
    models = predictor.ModelPair.load(s.models)
    trace = load_uniform(s.trace)
    config = _prediction_config(models, trace.period_ms, s, s.lat_ms)
    preds = predictor.run_prediction_schedule(models, trace, config)
    predictor.write_predictions_csv(preds, out)
    print(f"wrote {len(preds)} predictions to {out}")
    return 0


def cmd_sweep(s: Settings) -> int:
    out = _require_out(s, "sweep")
    models = predictor.ModelPair.load(s.models)
    traces = [load_uniform(p) for p in s.traces]
    if not traces:
        raise ConfigError("sweep needs at least one trace")
    lats = s.lats if isinstance(s.lats, list) else _float_list(str(s.lats))
    period = traces[0].period_ms
    if any(abs(t.period_ms - period) > 1e-9 for t in traces):
        raise ConfigError("all traces in a sweep must share one sample period")
    for lat in lats:
        _prediction_config(models, period, s, lat)  # validates grid multiples up front
    config = _prediction_config(models, period, s, lats[0])
    reports = evaluation.sweep_lat(models, traces, lats, config, keep_detail=bool(s.per_frame),
                                   max_workers=int(s.workers))
    means = evaluation.average_by_lat(reports)
    fmt = s.format if s.format in ("csv", "json") else (out.suffix.lstrip(".") or "csv")
    per_frame = out.with_name(out.stem + ".frames.csv") if s.per_frame else None
    evaluation.export_report(reports + means, out, fmt, per_frame_path=None)
    if per_frame is not None:
        evaluation.write_per_frame(reports, per_frame)
    for m in means:
        cells = " ".join(f"{c}={m.prediction[c]:.4g}/{m.baseline[c]:.4g}" for c in evaluation.COMPONENTS)
        print(f"lat {m.lat_ms:g} ms (prediction/baseline MAE): {cells}")
    print(f"wrote {len(reports)} reports + {len(means)} averages to {out}"
          + (f"; per-frame detail to {per_frame}" if per_frame else ""))
    return 0


def cmd_latency_model(s: Settings) -> int:
    cfg = dict(s.section)
    budget = dict(cfg.get("budget") or {})
    for name in BUDGET_FIELDS:
        flag = getattr(s.args, name, None)
        if flag is not None:
            budget[name] = flag
    cfg["budget"] = budget
    for key in ("encoder", "refresh_hz", "display_mode"):
        flag = getattr(s.args, key, None)
        if flag is not None:
            cfg[key] = flag
    b = latency.budget_from_config(cfg)
    text = json.dumps(latency.breakdown(b), indent=2)
    print(text)
    if s.out:
        Path(s.out).write_text(text + "\n")
    return 0


def cmd_probe_server(s: Settings) -> int:
    profile = probe.DelayProfile(fps=float(s.fps), proc_delay_ms=float(s.proc_delay_ms),
                                 up_delay_ms=float(s.up_delay_ms), down_delay_ms=float(s.down_delay_ms))
    try:
        probe.probe_server(probe.parse_endpoint(s.listen), profile)
    except KeyboardInterrupt:
        pass
    return 0


def cmd_probe_client(s: Settings) -> int:
    report = probe.probe_client(
        probe.parse_endpoint(s.connect), n_measurements=int(s.n), repaint_hz=float(s.repaint_hz),
        inter_measurement_gap_ms=float(s.gap_ms), timeout_ms=float(s.timeout_ms),
        recv_delay_ms=float(s.recv_delay_ms),
    )
    text = json.dumps(report.to_dict(), indent=2)
    print(text)
    if s.out:
        Path(s.out).write_text(text + "\n")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "train": cmd_train,
    "predict": cmd_predict,
    "sweep": cmd_sweep,
    "latency-model": cmd_latency_model,
    "probe-server": cmd_probe_server,
    "probe-client": cmd_probe_client,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="m2pkit", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with default settings")
    parser.add_argument("--seed", type=int, help="seed for synthetic generators")
    parser.add_argument("--out", help="output path")
    parser.add_argument("-v", "--verbose", action="store_true")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="resample raw traces onto a uniform grid")
    p.add_argument("paths", nargs="*")
    p.add_argument("--period-ms", type=float)
    p.add_argument("--format", choices=("csv", "dataset"))
    p.add_argument("--time-scale", help="multiply raw timestamps by this to get ms, or 'auto'")

    p = sub.add_parser("synth", parents=[common], help="generate seeded synthetic uniform traces")
    p.add_argument("--kind", choices=synth.KINDS)
    p.add_argument("--count", type=int)
    p.add_argument("--duration-ms", type=float)
    p.add_argument("--period-ms", type=float)

    p = sub.add_parser("train", parents=[common], help="fit the translational and rotational AR models")
    p.add_argument("trace")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--rho", type=int)
    g.add_argument("--aic", type=int, metavar="RHO_MAX", help="select the lag order by AIC")
    p.add_argument("--per-channel", action="store_true", default=None)

    p = sub.add_parser("predict", parents=[common], help="run the prediction schedule on one trace")
    p.add_argument("--models", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--lat-ms", type=float)
    p.add_argument("--frame-interval-ms", type=float)

    p = sub.add_parser("sweep", parents=[common], help="MAE of prediction and baseline over look-ahead times")
    p.add_argument("traces", nargs="+")
    p.add_argument("--models", required=True)
    p.add_argument("--lats", type=_float_list, help="comma-separated look-ahead times in ms")
    p.add_argument("--frame-interval-ms", type=float)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--per-frame", action="store_true", default=None)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("latency-model", parents=[common], help="print the motion-to-photon budget")
    p.add_argument("--encoder", help="built-in encoder profile name")
    p.add_argument("--refresh-hz", type=float)
    p.add_argument("--display-mode", choices=("average", "worst"))
    for name in BUDGET_FIELDS:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float)

    p = sub.add_parser("probe-server", parents=[common], help="serve frame tokens for latency probing")
    p.add_argument("--listen")
    p.add_argument("--fps", type=float)
    p.add_argument("--proc-delay-ms", type=float)
    p.add_argument("--up-delay-ms", type=float)
    p.add_argument("--down-delay-ms", type=float)

    p = sub.add_parser("probe-client", parents=[common], help="measure motion-to-photon latency")
    p.add_argument("--connect")
    p.add_argument("--n", type=int)
    p.add_argument("--repaint-hz", type=float)
    p.add_argument("--gap-ms", type=float)
    p.add_argument("--timeout-ms", type=float)
    p.add_argument("--recv-delay-ms", type=float)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = latency.load_config(args.config) if args.config else {}
        return COMMANDS[args.command](Settings(args, config))
    except (M2PError, OSError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
