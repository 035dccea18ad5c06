"""Batch command-line frontend.

Subcommands: ``features``, ``train``, ``classify``, ``validate``, ``synth``.
Run ``dimclass <subcommand> --help`` for the flags of each.

Exit codes: 0 success, 1 usage error, 2 data error (bad or missing input),
3 numeric degeneracy. The worker count comes from ``--workers``, else from
the ``DIMCLASS_WORKERS`` environment variable, else 1.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import PEGASOS_SEED, train_classifier, training_report
from .classifier_io import read_svg, write_svg
from .errors import DataError, DegenerateError
from .evaluation import metrics_report
from .msdim import FEATURE_MAGIC, FeatureSet, compute_features_batch, load_features, make_scales, save_features
from .multiclass import Cascade, PipelineStage, load_pipeline, propagate_to_scene, run_cascade
from .pointcloud import CorePointSet, SpatialIndex, load_xyz, subsample_min_distance
from .provenance import header_lines, make_record
from .synth import CLASS_NAMES, SceneSpec, generate_scene, load_labels

logger = logging.getLogger("dimclass")

WORKERS_ENV = "DIMCLASS_WORKERS"
UNLABELED = "unlabeled"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def resolve_workers(flag) -> int:
    if flag is not None:
        n = flag
    else:
        env = os.environ.get(WORKERS_ENV)
        if env is None or env == "":
            return 1
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    if n < 1 and n != -1:
        raise UsageError(f"worker count must be >= 1 (or -1 for all CPUs), got {n}")
    return n


def _config(args) -> dict:
    """The serializable run configuration echoed into output headers."""
    cfg = {}
    for k, v in sorted(vars(args).items()):
        if k == "func":
            continue
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, list):
            v = [str(x) if isinstance(x, Path) else x for x in v]
        cfg[k] = v
    return cfg


def _is_feature_file(path: Path) -> bool:
    if path.suffix == ".npz":
        return True
    try:
        with open(path) as fh:
            return fh.readline().startswith(f"# {FEATURE_MAGIC}")
    except OSError:
        raise DataError(f"cannot read input file {path}") from None


def _read_cores(path) -> CorePointSet:
    cloud = load_xyz(path)
    return CorePointSet.from_points(cloud.points)


# -- features ---------------------------------------------------------------


def _scene_features(scene_path, scales, d_min, cores_path, workers, record):
    cloud = load_xyz(scene_path)
    index = SpatialIndex(cloud)
    if cores_path is not None:
        cores = _read_cores(cores_path)
    elif d_min is not None:
        cores = subsample_min_distance(cloud, d_min, index=index)
    else:
        raise UsageError("either --d-min or --cores is required")
    fs = compute_features_batch(index, cores, scales, workers=workers, meta=record)
    return cloud, index, cores, fs


def _parse_scales(spec):
    try:
        return make_scales(spec)
    except ValueError as exc:
        raise UsageError(f"bad --scales {spec!r}: {exc}") from None


def cmd_features(args) -> int:
    scales = _parse_scales(args.scales)
    inputs = [args.input] + ([args.cores] if args.cores else [])
    record = make_record(_config(args), inputs)
    _, _, _, fs = _scene_features(args.input, scales, args.d_min, args.cores, args.workers, record)
    save_features(args.output, fs, provenance=record)
    print(f"{len(fs)} core points, {len(scales)} scales, {int((~fs.usable).sum())} unusable -> {args.output}")
    return 0


# -- train ------------------------------------------------------------------


def _load_many(paths) -> FeatureSet:
    sets = [load_features(p) for p in paths]
    for p, s in zip(paths[1:], sets[1:]):
        if not np.array_equal(s.scales, sets[0].scales):
            raise DataError(f"{p}: scales differ from {paths[0]}")
    return sets[0] if len(sets) == 1 else FeatureSet.concat(sets)


def cmd_train(args) -> int:
    inputs = list(args.positive) + list(args.negative) + list(args.unlabeled or [])
    record = make_record(_config(args), inputs)
    fp = _load_many(args.positive)
    fm = _load_many(args.negative)
    if not np.array_equal(fp.scales, fm.scales):
        raise DataError(
            f"scale mismatch between positive ({fp.scales.tolist()}) and negative ({fm.scales.tolist()}) features"
        )
    fu = _load_many(args.unlabeled) if args.unlabeled else None
    opts = {"seed": args.seed} if args.method == "svm" else {}
    Xp = fp.matrix()[fp.usable]
    Xm = fm.matrix()[fm.usable]
    if fu is not None and not np.array_equal(fu.scales, fp.scales):
        raise DataError("unlabeled features use different scales")
    Xu = fu.matrix()[fu.usable] if fu is not None else None
    clf = train_classifier(Xp, Xm, method=args.method, unlabeled=Xu, labels=tuple(args.labels), **opts)
    clf.scales = np.asarray(fp.scales, dtype=np.float64)
    header = header_lines(record, prefix="")
    write_svg(args.output, clf, Xp, Xm, header_comment=header)
    report = header_lines(record) + training_report(clf)
    if args.report:
        Path(args.report).write_text(report)
    sys.stdout.write(training_report(clf))
    return 0


# -- classify ---------------------------------------------------------------


def _single_stage(clf, tau) -> Cascade:
    pos, neg = clf.labels
    return Cascade([PipelineStage("classifier", clf, pos, neg, tau)])


def _stage_confidence(result) -> np.ndarray:
    """Confidence at the stage where each point was decided (NaN if unusable)."""
    out = np.full(len(result.decided_at), np.nan)
    ok = result.decided_at >= 0
    out[ok] = result.confidences[np.flatnonzero(ok), result.decided_at[ok]]
    return out


def cmd_classify(args) -> int:
    if (args.classifier is None) == (args.pipeline is None):
        raise UsageError("give exactly one of --classifier or --pipeline")
    if args.classifier is not None:
        cascade = _single_stage(read_svg(args.classifier), args.tau)
        inputs = [args.input, args.classifier]
    else:
        cascade = load_pipeline(args.pipeline)
        if args.tau is not None:
            cascade = cascade.with_thresholds(args.tau)
        inputs = [args.input, args.pipeline]
    scales = cascade.stages[0].classifier.scales
    for st in cascade.stages[1:]:
        if not np.array_equal(st.classifier.scales, scales):
            raise DataError(f"stage {st.name!r} uses different scales from stage {cascade.stages[0].name!r}")
    if args.cores:
        inputs.append(args.cores)
    record = make_record(_config(args), inputs)

    input_path = Path(args.input)
    if _is_feature_file(input_path):
        fs = load_features(input_path)
        result = run_cascade(cascade, fs)
        points = fs.core_points
        labels = result.labels
        conf = _stage_confidence(result)
    else:
        cloud, _, cores, fs = _scene_features(input_path, scales, args.d_min, args.cores, args.workers, record)
        result = run_cascade(cascade, fs)
        core_index = SpatialIndex(cores.points)
        nearest = core_index.nearest(cloud.points, workers=args.workers)
        points = cloud.points
        labels = propagate_to_scene(result.labels, core_index, cloud.points)
        conf = _stage_confidence(result)[nearest]

    with open(args.output, "w") as fh:
        fh.write(header_lines(record))
        fh.write("# x y z label confidence\n")
        for (x, y, z), lab, c in zip(points.tolist(), labels, conf.tolist()):
            fh.write(f"{x!r} {y!r} {z!r} {UNLABELED if lab is None else lab} {c!r}\n")

    n = len(labels)
    counts = {}
    for lab in labels:
        key = UNLABELED if lab is None else lab
        counts[key] = counts.get(key, 0) + 1
    print(f"{n} points classified -> {args.output}")
    for key in sorted(counts):
        print(f"  {key}: {counts[key]}")
    print(f"unlabeled fraction: {counts.get(UNLABELED, 0) / n!r}")
    return 0


# -- validate ---------------------------------------------------------------


def cmd_validate(args) -> int:
    record = make_record(_config(args), [args.predictions, args.truth])
    pred = load_labels(args.predictions, column=args.pred_column)
    truth = load_labels(args.truth, column=args.truth_column)
    if len(pred) != len(truth):
        raise DataError(f"{args.predictions} has {len(pred)} rows but {args.truth} has {len(truth)}")
    classes = args.classes or sorted(set(truth))
    missing = [c for c in classes if c not in truth]
    if missing:
        raise DataError(f"classes absent from ground truth: {', '.join(missing)}")
    n_unl = sum(p == UNLABELED for p in pred)
    body = metrics_report(truth, pred, classes)
    body += f"unlabeled,{n_unl},{n_unl / len(pred)!r}\n"
    text = header_lines(record) + body
    if args.output:
        Path(args.output).write_text(text)
    sys.stdout.write(body)
    return 0


# -- synth ------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SceneSpec.load(args.spec)
    if args.seed is not None:
        spec = SceneSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    cfg = _config(args)
    cfg["scene"] = spec.to_dict()
    record = make_record(cfg, [args.spec])
    scene = generate_scene(spec)
    if len(scene.points) == 0:
        raise DataError("scene spec produced no points")
    with open(args.output, "w") as fh:
        fh.write(header_lines(record))
        fh.write("# x y z label\n")
        for (x, y, z), lab in zip(scene.points.tolist(), scene.labels.tolist()):
            fh.write(f"{x!r} {y!r} {z!r} {CLASS_NAMES[lab]}\n")
    print(f"{len(scene.points)} points -> {args.output}")
    return 0


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dimclass", description="Multi-scale dimensionality classification of 3D point clouds")
    p.add_argument("--version", action="version", version=f"dimclass {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def workers(sp):
        sp.add_argument(
            "--workers",
            type=int,
            default=None,
            help=f"parallel workers for neighborhood queries; -1 uses all CPUs "
            f"(default: ${WORKERS_ENV} or 1). Output does not depend on it",
        )

    f = sub.add_parser("features", help="compute multi-scale features at core points")
    f.add_argument("input", type=Path, help="scene point cloud (x y z per line, extra columns ignored)")
    f.add_argument("-o", "--output", type=Path, required=True, help="feature file (.npz for binary, else text)")
    f.add_argument(
        "--scales",
        required=True,
        help='neighborhood diameters: "min:step:max" (inclusive) or a comma/space separated list',
    )
    g = f.add_mutually_exclusive_group(required=True)
    g.add_argument("--d-min", type=float, help="core points: greedy subsample with this minimum spacing")
    g.add_argument("--cores", type=Path, help="core points: x y z file")
    workers(f)
    f.set_defaults(func=cmd_features)

    t = sub.add_parser("train", help="train a binary classifier and write it as SVG")
    t.add_argument("--positive", type=Path, nargs="+", required=True, help="feature file(s) of the +1 class")
    t.add_argument("--negative", type=Path, nargs="+", required=True, help="feature file(s) of the -1 class")
    t.add_argument("--unlabeled", type=Path, nargs="+", help="feature file(s) for semi-supervised boundary placement")
    t.add_argument("--method", choices=("lda", "svm"), default="lda", help="direction trainer (default: lda)")
    t.add_argument("--labels", nargs=2, default=["positive", "negative"], metavar=("POS", "NEG"), help="class names")
    t.add_argument("--seed", type=int, default=PEGASOS_SEED, help=f"SVM sampling seed (default: {PEGASOS_SEED})")
    t.add_argument("-o", "--output", type=Path, required=True, help="classifier SVG")
    t.add_argument("--report", type=Path, help="also write the training report here")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("classify", help="label a scene or a feature file")
    c.add_argument("input", type=Path, help="scene point cloud or feature file")
    c.add_argument("--classifier", type=Path, help="single classifier SVG")
    c.add_argument("--pipeline", type=Path, help="cascade config: name svg positive negative_route tau per line")
    c.add_argument(
        "--tau",
        type=float,
        default=None,
        help="confidence threshold in [0.5, 1); overrides every pipeline stage (default 0.5 for --classifier)",
    )
    g = c.add_mutually_exclusive_group()
    g.add_argument("--d-min", type=float, help="core spacing when the input is a scene")
    g.add_argument("--cores", type=Path, help="core points file when the input is a scene")
    c.add_argument("-o", "--output", type=Path, required=True, help="labeled points: x y z label confidence")
    workers(c)
    c.set_defaults(func=cmd_classify)

    v = sub.add_parser("validate", help="compare predicted labels with ground truth")
    v.add_argument("predictions", type=Path, help="output of classify")
    v.add_argument("truth", type=Path, help="labeled points, e.g. output of synth")
    v.add_argument("--pred-column", type=int, default=3, help="0-based label column in predictions (default: 3)")
    v.add_argument("--truth-column", type=int, default=3, help="0-based label column in truth (default: 3)")
    v.add_argument("--classes", nargs="+", help="class order for the report (default: sorted truth labels)")
    v.add_argument("-o", "--output", type=Path, help="write the report here as well as to stdout")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("synth", help="generate a labeled synthetic scene from a JSON spec")
    s.add_argument("spec", type=Path, help="scene spec (JSON)")
    s.add_argument("--seed", type=int, help="override the seed in the scene spec")
    s.add_argument("-o", "--output", type=Path, required=True, help="labeled points: x y z label")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if hasattr(args, "workers"):
            args.workers = resolve_workers(args.workers)
        if args.command == "classify" and args.classifier is not None and args.tau is None:
            args.tau = 0.5
        if args.command == "classify" and not _is_feature_file(Path(args.input)):
            if args.d_min is None and args.cores is None:
                raise UsageError("a scene input needs --d-min or --cores")
        return args.func(args)
    except UsageError as exc:
        print(f"dimclass: error: {exc}", file=sys.stderr)
        return 1
    except DegenerateError as exc:
        print(f"dimclass: numeric degeneracy: {exc}", file=sys.stderr)
        return 3
    except (DataError, ValueError) as exc:
        print(f"dimclass: data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"dimclass: cannot access {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
