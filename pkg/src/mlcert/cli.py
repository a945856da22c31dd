"""``mlcert`` command line: sample -> certify -> evaluate, plus verify and generate.

Every output file starts with a format line and a ``# provenance:`` comment
holding the full configuration, input file digests and the package version.
Output paths are not part of the provenance, so reruns are byte-identical.

Exit codes: 0 success, 2 validation error, 3 soundness failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from . import __version__
from .attack_verifier import attack_profile
from .bounds import bounds_from_probabilities, estimate_bounds
from .certifier import BASELINE, MULTIGUARD, NO_JOINT, certify, certify_batch
from .evaluation import (
    aggregate,
    config_hash,
    parse_r_grid,
    read_results_file,
    write_metrics_file,
    write_results_file,
)
from .sampler import (
    SmoothingConfig,
    count_frequencies,
    read_counts_file,
    write_counts_file,
)
from .synthetic_model import (
    SyntheticInput,
    exact_label_probabilities,
    exact_probability_bounds,
    load_classifier,
    load_dataset,
    partition_line,
    random_affine_classifier,
    random_problem,
    save_classifier,
    save_dataset,
)

logger = logging.getLogger("mlcert")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOUNDNESS = 3
EXIT_IO = 4


class ValidationError(Exception):
    pass


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _provenance(args, config: SmoothingConfig | None, inputs: dict) -> dict:
    prov = {
        "tool": "mlcert",
        "version": __version__,
        "subcommand": args.command,
        "config": config.to_dict() if config is not None else None,
        "inputs": {name: _file_digest(p) for name, p in sorted(inputs.items())},
    }
    if args.command in ("certify", "verify"):
        prov["r_grid"] = args.r_grid
        prov["modes"] = list(_modes(args))
        prov["strict_paper_cp"] = args.strict_paper_cp
    return prov


def _output_path(out: str, stem: str, provenance: dict) -> Path:
    path = Path(out)
    if path.is_dir():
        return path / f"{stem}-{config_hash(provenance)}.csv"
    if not path.parent.exists():
        raise OSError(f"output directory {path.parent} does not exist")
    return path


def _modes(args) -> tuple[str, ...]:
    if args.mode == "all":
        return (MULTIGUARD, NO_JOINT, BASELINE)
    if args.mode == "baseline":
        return (BASELINE,)
    return (NO_JOINT,) if args.no_joint_terms else (MULTIGUARD,)


def _config(args, k_prime: int, c: int | None = None) -> SmoothingConfig:
    if args.k_prime is not None and args.k_prime != k_prime:
        raise ValidationError(f"--k-prime {args.k_prime} does not match the input's k_prime={k_prime}")
    try:
        config = SmoothingConfig(sigma=args.sigma, n=args.n, alpha=args.alpha, k_prime=k_prime,
                                 k=args.k, seed=args.seed)
        if c is not None:
            config.check_labels(c)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    return config


def _require(path, flag):
    if path is None:
        raise ValidationError(f"{flag} is required")
    if not Path(path).is_file():
        raise OSError(f"{flag}: cannot read {path}")
    return path


def cmd_sample(args) -> int:
    clf_path = _require(args.classifier, "--classifier")
    data_path = _require(args.dataset, "--dataset")
    try:
        clf = load_classifier(clf_path)
        items = load_dataset(data_path, clf)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    config = _config(args, clf.k_prime, clf.num_labels)
    instances = [count_frequencies(clf, it.point, config, it.ground_truth, it.id, workers=args.workers)
                 for it in items]
    prov = _provenance(args, config, {"classifier": clf_path, "dataset": data_path})
    out = _output_path(args.out, "counts", prov)
    write_counts_file(instances, out, prov)
    logger.info("wrote %d counts records to %s", len(instances), out)
    return EXIT_OK


def cmd_certify(args) -> int:
    counts_path = _require(args.counts, "--counts")
    try:
        instances = read_counts_file(counts_path)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    if not instances:
        raise ValidationError(f"{counts_path}: no records")
    k_primes = {inst.k_prime for inst in instances}
    if len(k_primes) != 1:
        raise ValidationError(f"counts file mixes k_prime values {sorted(k_primes)}")
    config = _config(args, k_primes.pop())
    for inst in instances:
        if config.k > inst.c:
            raise ValidationError(f"record {inst.id!r}: k={config.k} exceeds c={inst.c}")
    radii = parse_r_grid(args.r_grid)
    results = certify_batch(instances, config, radii, _modes(args), args.strict_paper_cp, args.workers)
    prov = _provenance(args, config, {"counts": counts_path})
    out = _output_path(args.out, "results", prov)
    write_results_file(results, out, prov)
    logger.info("wrote %d results to %s", len(results), out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    results_path = _require(args.results, "--results")
    try:
        results = read_results_file(results_path)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    rows = aggregate(results)
    prov = _provenance(args, None, {"results": results_path})
    out = _output_path(args.out, "metrics", prov)
    write_metrics_file(rows, out, prov)
    logger.info("wrote %d metric rows to %s", len(rows), out)
    return EXIT_OK


def _verify_problems(args, config_k_prime):
    if args.classifier is not None:
        clf_path = _require(args.classifier, "--classifier")
        data_path = _require(args.dataset, "--dataset")
        try:
            clf = load_classifier(clf_path)
            items = load_dataset(data_path, clf)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        if clf.dimension != 1:
            raise ValidationError("verify needs a 1-D classifier")
        return [(it.id, clf, it.point[0], it.ground_truth, args.k) for it in items], \
            {"classifier": clf_path, "dataset": data_path}
    rng = np.random.default_rng(args.seed)
    problems = []
    for i in range(args.num_instances):
        clf, x, gt, k = random_problem(rng, args.sigma, k_prime=config_k_prime,
                                       k=None if args.k_random else args.k)
        problems.append((f"syn{i:05d}", clf, x, gt, k))
    return problems, {}


def cmd_verify(args) -> int:
    radii = parse_r_grid(args.r_grid)
    problems, inputs = _verify_problems(args, args.k_prime)
    rows = []
    failures = 0
    failed_instances = 0
    for pid, clf, x, gt, k in problems:
        config = _config(args, clf.k_prime)
        config = SmoothingConfig(config.sigma, config.n, config.alpha, config.k_prime, k, config.seed)
        try:
            config.check_labels(clf.num_labels)
        except ValueError as exc:
            raise ValidationError(f"{pid}: {exc}") from None
        part = partition_line(clf)
        if args.monte_carlo:
            inst = count_frequencies(clf, [x], config, gt, pid)
            bounds = estimate_bounds(inst, config.alpha, strict_paper=args.strict_paper_cp)
        else:
            lo, hi = exact_probability_bounds(clf, x, config.sigma, part)
            bounds = bounds_from_probabilities(lo, gt, clf.k_prime, hi)
        sweeps = attack_profile(clf, x, gt, config, radii, partition=part)
        bad = False
        for R, sw in zip(radii, sweeps):
            e = certify(bounds, R, config, MULTIGUARD, pid).certified_size
            ok = sw.worst_intersection >= e
            failures += not ok
            bad |= not ok
            rows.append([pid, repr(R), e, sw.worst_intersection, repr(sw.worst_delta), "pass" if ok else "FAIL"])
        failed_instances += bad
    prov = _provenance(args, None, inputs)
    prov["verify"] = {"monte_carlo": args.monte_carlo, "num_problems": len(problems), "seed": args.seed,
                      "sigma": args.sigma, "n": args.n, "alpha": args.alpha}
    out = _output_path(args.out, "verify", prov)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write("# mlcert-verify v1\n# provenance: " + json.dumps(prov, sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "R", "e", "worst_intersection", "worst_delta", "status"])
        writer.writerows(rows)
    logger.info("%d problems, %d (instance, R) checks, %d failures", len(problems), len(rows), failures)
    if not args.monte_carlo:
        return EXIT_SOUNDNESS if failures else EXIT_OK
    # with estimated bounds, a violation per instance may occur with probability <= alpha
    test = binomtest(failed_instances, len(problems), args.alpha, alternative="greater")
    logger.info("instances with a violation: %d/%d, p=%.3g", failed_instances, len(problems), test.pvalue)
    return EXIT_SOUNDNESS if test.pvalue < 0.01 else EXIT_OK


def cmd_generate(args) -> int:
    out_dir = Path(args.out)
    if not out_dir.is_dir():
        raise OSError(f"--out must be an existing directory, got {out_dir}")
    rng = np.random.default_rng(args.seed)
    k_prime = args.k_prime if args.k_prime is not None else 1
    clf = random_affine_classifier(rng, args.num_labels, k_prime, dimension=1, scale=2.0)
    items = []
    for i in range(args.num_instances):
        x = float(rng.uniform(-2.0, 2.0))
        p = exact_label_probabilities(clf, x, args.sigma)
        d = int(rng.integers(1, args.num_labels))
        gt = tuple(sorted(int(j) for j in np.argsort(-p, kind="stable")[:d]))
        items.append(SyntheticInput(f"x{i:04d}", (x,), gt))
    save_classifier(clf, out_dir / "classifier.json")
    save_dataset(items, out_dir / "dataset.json")
    logger.info("wrote classifier.json and dataset.json (%d inputs) to %s", len(items), out_dir)
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma", type=float, default=0.5, help="noise standard deviation")
    p.add_argument("--n", type=int, default=1000, help="number of noisy samples")
    p.add_argument("--alpha", type=float, default=0.001, help="overall failure probability")
    p.add_argument("--k-prime", type=int, default=None,
                   help="labels predicted by the base classifier (default: from the input)")
    p.add_argument("--k", type=int, default=3, help="labels predicted by the smoothed classifier")
    p.add_argument("--r-grid", default="0:2:0.05", help='radii, "start:stop:step" or "r1,r2,..."')
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["multiguard", "baseline", "all"], default="multiguard")
    p.add_argument("--no-joint-terms", action="store_true", help="drop the joint terms (ablation)")
    p.add_argument("--strict-paper-cp", action="store_true",
                   help="use Beta(1-a/c; n_j, n-n_j+1) for upper bounds instead of the standard endpoint")
    p.add_argument("--classifier", help="classifier specification (JSON)")
    p.add_argument("--dataset", help="synthetic inputs (JSON)")
    p.add_argument("--counts", help="counts file")
    p.add_argument("--results", help="results file")
    p.add_argument("--out", required=True, help="output file, or a directory to name it by config hash")
    p.add_argument("--workers", type=int, default=1, help="threads used inside a stage")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlcert",
        description="Certified top-k robustness for Gaussian-smoothed multi-label classifiers.")
    parser.add_argument("--version", action="version", version=f"mlcert {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "sample": (cmd_sample, "write label-frequency counts for a synthetic dataset"),
        "certify": (cmd_certify, "certify every record of a counts file on an R grid"),
        "evaluate": (cmd_evaluate, "aggregate a results file into precision/recall/f1 per R"),
        "verify": (cmd_verify, "check certificates against exhaustive 1-D attacks"),
        "generate": (cmd_generate, "write a random 1-D classifier and dataset"),
    }
    for name, (fn, help_text) in handlers.items():
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.set_defaults(func=fn)
        if name == "verify":
            p.add_argument("--num-instances", type=int, default=100)
            p.add_argument("--monte-carlo", action="store_true",
                           help="estimate bounds from samples instead of exact probabilities")
            p.add_argument("--k-random", action="store_true",
                           help="draw k per random problem instead of using --k")
        if name == "generate":
            p.add_argument("--num-instances", type=int, default=10)
            p.add_argument("--num-labels", type=int, default=6)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"mlcert: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"mlcert: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"mlcert: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
