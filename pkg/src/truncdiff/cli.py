"""Command-line entry point: ``truncdiff <gen-data|train|eval|plot|bench>``."""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
import time
from pathlib import Path

from . import metrics
from .config import RunConfig, load_config
from .errors import TruncDiffError
from .persistence import load_model, save_model
from .pipeline import build_model, fit_anchors, split, train_config
from .policy import TRUNCATED, VANILLA, run_planner, train
from .rng import make_rng
from .world import gen_corpus, read_scenes, write_scenes


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"{self.prog}: {message}")


def _out_path(path) -> Path:
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(f"cannot create directory for {p}: {e.strerror}") from None
    return p


def _read_corpus(path):
    if not Path(path).is_file():
        raise CliError(f"corpus file not found: {path}")
    return read_scenes(path)


def _read_model(path):
    if not Path(path).is_file():
        raise CliError(f"model file not found: {path}")
    return load_model(path)


def _check_horizon(model, scenes, path) -> None:
    for s in scenes:
        if s.horizon != model.cfg.horizon:
            raise CliError(f"horizon mismatch: model {path} has H={model.cfg.horizon}, corpus scene has H={s.horizon}")


def _write_text(path, text: str) -> None:
    p = _out_path(path)
    try:
        with open(p, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise CliError(f"cannot write {p}: {e.strerror}") from None


def cmd_gen_data(cfg: RunConfig, args) -> None:
    out = args.out or cfg.paths.corpus
    n_train = cfg.data.n_train if args.n_train is None else args.n_train
    n_eval = cfg.data.n_eval if args.n_eval is None else args.n_eval
    scenes = gen_corpus(n_train, n_eval, cfg.seed, cfg.cascade.horizon, cfg.data.dt)
    p = _out_path(out)
    try:
        write_scenes(p, scenes)
    except OSError as e:
        raise CliError(f"cannot write {p}: {e.strerror}") from None
    print(f"wrote {n_train} train + {n_eval} eval scenes to {p}")


def _print_epoch(epoch, loss) -> None:
    print(f"epoch={epoch} rec={loss.rec:.6f} cls={loss.cls:.6f} total={loss.total:.6f}", flush=True)


def cmd_train(cfg: RunConfig, args) -> None:
    scenes = split(_read_corpus(args.corpus or cfg.paths.corpus), "train")
    if not scenes:
        raise CliError("corpus has no training scenes")
    anchors = fit_anchors(cfg, scenes)
    tcfg = train_config(cfg, args.epochs)
    kinds = [(TRUNCATED, args.out or cfg.paths.model)]
    if args.baseline:
        kinds.append((VANILLA, args.baseline_out or cfg.paths.baseline_model))
    for kind, out in kinds:
        model = build_model(cfg, kind, anchors)
        print(f"# training {kind} policy", flush=True)
        train(model, scenes, tcfg, _print_epoch)
        p = _out_path(out)
        try:
            save_model(p, model)
        except OSError as e:
            raise CliError(f"cannot write {p}: {e.strerror}") from None
        print(f"# wrote {p}")


def _write_scene_rows(path, report) -> None:
    cols = ["method", "scene", "kind", "pdms", "min_ade", "mode_coverage", "diversity"]
    p = _out_path(path)
    with open(p, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(cols)
        for m in report.methods:
            for i, s in enumerate(m.per_scene):
                w.writerow([m.name, i, s.kind] + [repr(getattr(s, c)) for c in cols[3:]])


def cmd_eval(cfg: RunConfig, args) -> None:
    from .plotting import plot_report

    model_path = args.model or cfg.paths.model
    base_path = args.baseline_model or cfg.paths.baseline_model
    scenes = split(_read_corpus(args.corpus or cfg.paths.corpus), "eval")
    trunc, vanilla = _read_model(model_path), _read_model(base_path)
    _check_horizon(trunc, scenes, model_path)
    _check_horizon(vanilla, scenes, base_path)
    report = metrics.eval_suite(
        trunc, vanilla, scenes, cfg.seed, cfg.eval.coverage_threshold, cfg.eval.diversity == "path"
    )
    out = Path(args.report or cfg.paths.report)
    _write_text(out, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    _write_scene_rows(out.with_suffix(".tsv"), report)
    plot_report(report, _out_path(out.with_suffix(".svg")))
    print(report.table())
    print(f"# wrote {out}, {out.with_suffix('.tsv')}, {out.with_suffix('.svg')}")


def cmd_plot(cfg: RunConfig, args) -> None:
    from .plotting import plot_scene

    scenes = _read_corpus(args.scenes)
    if not 0 <= args.index < len(scenes):
        raise CliError(f"line index {args.index} outside 0..{len(scenes) - 1} in {args.scenes}")
    model_path = args.model or cfg.paths.model
    model = _read_model(model_path)
    scene = scenes[args.index]
    _check_horizon(model, [scene], model_path)
    result = run_planner(model, scene, make_rng(cfg.seed, 0x9107, args.index))
    plot_scene(scene, result, _out_path(args.out))
    print(f"wrote {args.out} ({len(result.candidates)} candidates, chosen {result.chosen})")


def cmd_bench(cfg: RunConfig, args) -> None:
    n = cfg.bench.scenes if args.scenes is None else args.scenes
    if n < 1:
        raise CliError(f"--scenes must be >= 1, got {n}")
    scenes = _read_corpus(args.corpus or cfg.paths.corpus)
    pool = split(scenes, "eval") or scenes
    if not pool:
        raise CliError("corpus is empty")
    chosen = [pool[i % len(pool)] for i in range(n)]
    result = {"n_scenes": n}
    steps = {}
    for name, path in (("truncated", args.model or cfg.paths.model), ("vanilla", args.baseline_model or cfg.paths.baseline_model)):
        model = _read_model(path)
        _check_horizon(model, chosen[:1], path)
        times = []
        for i, scene in enumerate(chosen):
            rng = make_rng(cfg.seed, 0xBE7C, i)
            start = time.perf_counter()
            run_planner(model, scene, rng)
            times.append(time.perf_counter() - start)
        steps[name] = model.n_steps
        result[name] = {
            "n_denoise_steps": model.n_steps,
            "mean_seconds": statistics.fmean(times),
            "median_seconds": statistics.median(times),
        }
    result["step_ratio"] = steps["vanilla"] / steps["truncated"]
    for name in ("truncated", "vanilla"):
        r = result[name]
        print(f"{name:>9}: steps={r['n_denoise_steps']} mean={1e3 * r['mean_seconds']:.3f}ms median={1e3 * r['median_seconds']:.3f}ms")
    print(f"step_ratio={result['step_ratio']:g}")
    if args.out:
        _write_text(args.out, json.dumps(result, indent=2, sort_keys=True) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="truncdiff", description="Truncated anchored diffusion planner.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="run config JSON (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        return p

    p = common(sub.add_parser("gen-data", help="write a JSON-lines scene corpus"))
    p.add_argument("--out", help="corpus path")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-eval", type=int)
    p.set_defaults(func=cmd_gen_data)

    p = common(sub.add_parser("train", help="fit anchors and train the policies"))
    p.add_argument("--corpus")
    p.add_argument("--out", help="truncated model path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--baseline", action="store_true", help="also train the vanilla diffusion baseline")
    p.add_argument("--baseline-out", help="vanilla model path")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("eval", help="truncated vs vanilla evaluation report"))
    p.add_argument("--corpus")
    p.add_argument("--model")
    p.add_argument("--baseline-model")
    p.add_argument("--report", help="JSON report path; .tsv and .svg are written next to it")
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("plot", help="render one planned scene as SVG"))
    p.add_argument("--scenes", required=True, help="JSON-lines scene file")
    p.add_argument("--index", type=int, default=0, help="0-based line index")
    p.add_argument("--model")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = common(sub.add_parser("bench", help="per-scene inference latency"))
    p.add_argument("--corpus")
    p.add_argument("--model")
    p.add_argument("--baseline-model")
    p.add_argument("--scenes", type=int)
    p.add_argument("--out", help="optional JSON timing report")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        args.func(cfg, args)
    except (CliError, TruncDiffError) as e:
        _fail(str(e))
        return 2
    except OSError as e:
        _fail(f"{e.filename or ''}: {e.strerror}")
        return 2
    return 0


def _fail(message: str) -> None:
    print("error: " + " ".join(message.split()), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
