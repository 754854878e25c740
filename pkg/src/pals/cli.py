"""Command-line entry point: simulate, fit, predict, experiment, report-weights, eval.

Exit codes: 0 success, 1 experiment finished with failed grid points,
2 invalid input (config, file format, dimensions), 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, graph, model, synth
from . import experiment as ex
from .graph import FormatError
from .metrics import MetricError, auc, bootstrap_ci, tpr_at_fpr

log = logging.getLogger("pals")

EXIT_OK, EXIT_FAILED_POINTS, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config files: one ``key = value`` per line, ``#`` starts a comment

_SYNTH_KEYS = {"feature_dim": int, "spreader_determinism": str, "p_y_given_exposure": float,
               "p_y_given_susceptible": float, "p_baseline": float, "susceptible_fraction": float,
               "observed_spreader_fraction": float, "combine": str, "true_u": "floats",
               "true_u_magnitude": float}
_NETWORK_KEYS = {"nodes_per_block": "ints", "p_within": float, "p_between": float}
_OPTIMIZER_KEYS = {"max_iterations": int, "gradient_tolerance": float, "line_search_shrink": float,
                   "l2_penalty": float, "l1_penalty": float}
_FIT_KEYS = {"max_em_rounds": int, "e_step_sweeps_per_round": int, "elbo_rel_tolerance": float,
             "phi_rule": str, "fit_intercept": "bool", "initial_exposure_weight": float,
             "susceptibility_penalty": float, "exposure_penalty": float, "predict_max_sweeps": int,
             "predict_tolerance": float}
_RUN_KEYS = {"seed": int, "experiment": str, "runs": int, "jobs": int, "target_fpr": float,
             "confidence": float, "resamples": int}
SCHEMA = {**_SYNTH_KEYS, **_NETWORK_KEYS, **_OPTIMIZER_KEYS, **_FIT_KEYS, **_RUN_KEYS}


def _convert(kind, text):
    if kind == "ints":
        return tuple(int(t) for t in text.split(",") if t.strip())
    if kind == "floats":
        return tuple(float(t) for t in text.split(",") if t.strip())
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"expected true or false, got {text!r}")
    return kind(text)


def parse_config(text, source="<config>"):
    """Flat key/value config to a dict of typed values; errors name the line."""
    out, where = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}: line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}: line {lineno}: duplicate key {key!r} (first set on line {where[key]})")
        try:
            out[key] = _convert(SCHEMA[key], value)
        except ValueError as exc:
            raise ConfigError(f"{source}: line {lineno}: bad value for {key!r}: {exc}") from None
        where[key] = lineno
    return out


def load_config(path):
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def resolve_seed(cfg, flag=None):
    """File value, then PALS_SEED, then --seed; the last one set wins."""
    seed = cfg.get("seed", 0)
    env = os.environ.get("PALS_SEED")
    if env is not None and env.strip():
        try:
            seed = int(env)
        except ValueError:
            raise ConfigError(f"PALS_SEED: not an integer: {env!r}") from None
    if flag is not None:
        seed = flag
    return int(seed)


def _pick(cfg, keys):
    return {k: cfg[k] for k in keys if k in cfg}


def synth_config(cfg, seed):
    try:
        net = replace(synth.SynthConfig().network, seed=int(seed), **_pick(cfg, _NETWORK_KEYS))
        kw = _pick(cfg, _SYNTH_KEYS)
        magnitude = kw.pop("true_u_magnitude", None)
        if magnitude is not None and "true_u" not in kw:
            kw["true_u"] = tuple(synth.default_true_u(kw.get("feature_dim", 20), magnitude))
        return synth.SynthConfig(network=net, seed=int(seed), **kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid cohort configuration: {exc}") from None


def fit_config(cfg, seed):
    try:
        opt_kw = _pick(cfg, _OPTIMIZER_KEYS)
        base = model.FitConfig()
        optimizer = replace(base.optimizer, **opt_kw) if opt_kw else base.optimizer
        return model.FitConfig(optimizer=optimizer, seed=int(seed), **_pick(cfg, _FIT_KEYS))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid fit configuration: {exc}") from None


def config_digest(resolved):
    """SHA-256 of the resolved configuration as canonical JSON (sorted keys)."""
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


# ---------------------------------------------------------------------------
# atomic output


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_with(writer, path, *args):
    """Run a path-taking writer against a temp file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    os.close(fd)
    try:
        writer(*args, tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(path, command, resolved, seed, outputs, **extra):
    doc = {"command": command, "config_digest": config_digest(resolved), "seed": int(seed),
           "tool_version": __version__, "output_paths": [str(p) for p in outputs], "config": resolved}
    doc.update(extra)
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _resolved(synth_cfg=None, fit_cfg=None, **extra):
    out = dict(extra)
    if synth_cfg is not None:
        out["cohort"] = asdict(synth_cfg)
    if fit_cfg is not None:
        out["fit"] = asdict(fit_cfg)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    cfg = load_config(args.config)
    seed = resolve_seed(cfg, args.seed)
    sc = synth_config(cfg, seed)
    out = Path(args.out)
    tr_net, tr_truth, te_net, te_truth = synth.generate_split(sc)
    paths = []
    for split, net, truth in (("train", tr_net, tr_truth), ("test", te_net, te_truth)):
        for suffix, writer, obj in (("nodes", graph.write_nodes, net), ("edges", graph.write_edges, net)):
            p = out / f"{split}_{suffix}.csv"
            _atomic_with(writer, p, obj)
            paths.append(p)
        p = out / f"{split}_truth.csv"
        _atomic_with(lambda path, n=net, t=truth: synth.write_ground_truth(n, t, path), p)
        paths.append(p)
    write_manifest(out / "manifest.json", "simulate", _resolved(sc), seed, paths)
    print(f"wrote {len(paths)} files to {out}")
    return EXIT_OK


def _read_cohort(nodes, edges):
    return graph.read_network(nodes, edges)


def _labels_from_truth(path, net, need_y=True):
    truth, seen = synth.read_ground_truth(path, net)
    mains = net.main_indices
    if need_y:
        missing = mains[~seen[mains] | (truth.y[mains] < 0)]
        if missing.size:
            raise InputError(f"{path}: no outcome label for main node {net.ids[missing[0]]!r}")
    return truth


def cmd_fit(args):
    cfg = load_config(args.config)
    seed = resolve_seed(cfg, args.seed)
    fc = fit_config(cfg, seed)
    net = _read_cohort(args.nodes, args.edges)
    truth = _labels_from_truth(args.truth, net)
    observed = truth.observed_labels() if args.observed_spreaders else None
    result = model.fit(net, truth.y, observed, fc)
    out = Path(args.out)
    _atomic_write(out, result.weights.to_json() + "\n")
    trace_path = out.with_name(out.stem + "_elbo.csv")
    _atomic_write(trace_path, "round,elbo\n" + "".join(f"{k},{float(v)!r}\n" for k, v in enumerate(result.elbo_trace)))
    paths = [out, trace_path]
    if args.diagnostics:
        prefix = out.with_name(out.stem + "_state")
        result.state.write_diagnostics(net, str(prefix))
        paths += [Path(f"{prefix}_nodes.csv"), Path(f"{prefix}_edges.csv")]
    write_manifest(out.with_name(out.stem + "_manifest.json"), "fit",
                   _resolved(fit_cfg=fc, observed_spreaders=bool(args.observed_spreaders)), seed, paths,
                   converged=bool(result.converged), rounds=len(result.elbo_trace) - 1,
                   final_elbo=float(result.elbo_trace[-1]))
    status = "converged" if result.converged else "not converged"
    print(f"{status} after {len(result.elbo_trace) - 1} rounds, elbo {result.elbo_trace[-1]:.6f}")
    return EXIT_OK


def _read_weights(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read weights {path}: {exc}") from None
    try:
        return model.PalsWeights.from_json(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: invalid weights file: {exc}") from None


def cmd_predict(args):
    cfg = load_config(args.config)
    seed = resolve_seed(cfg, args.seed)
    fc = fit_config(cfg, seed)
    weights = _read_weights(args.weights)
    net = _read_cohort(args.nodes, args.edges)
    if net.feature_dim != weights.feature_dim:
        raise InputError(f"cohort has {net.feature_dim} features but weights expect {weights.feature_dim}")
    mains = net.main_indices
    if args.target == "spreader":
        scores = model.predict_spreader(weights, net.features[mains])
    else:
        observed = None
        if args.observed_spreaders:
            if not args.truth:
                raise InputError("--observed-spreaders needs --truth")
            observed = _labels_from_truth(args.truth, net, need_y=False).observed_labels()
        scores = model.predict_infection(weights, net, observed, fc)
    text = "id,score\n" + "".join(f"{net.ids[i]},{float(s)!r}\n" for i, s in zip(mains, scores))
    _atomic_write(args.out, text)
    write_manifest(Path(args.out).with_name(Path(args.out).stem + "_manifest.json"), "predict",
                   _resolved(fit_cfg=fc, target=args.target, observed_spreaders=bool(args.observed_spreaders)),
                   seed, [args.out])
    print(f"wrote {len(mains)} scores to {args.out}")
    return EXIT_OK


def read_scores(path):
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["id", "score"]:
        raise FormatError(f"{path}: row 1: expected header id,score")
    ids, scores = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise FormatError(f"{path}: row {r}: expected 2 columns, got {len(row)}")
        try:
            s = float(row[1])
        except ValueError:
            raise FormatError(f"{path}: row {r} column 'score': not a number: {row[1]!r}") from None
        ids.append(row[0])
        scores.append(s)
    return ids, np.array(scores)


def cmd_eval(args):
    ids, scores = read_scores(args.scores)
    net = _read_cohort(args.nodes, args.edges)
    truth, seen = synth.read_ground_truth(args.truth, net)
    column = truth.y if args.target == "infection" else truth.z_true
    index = {k: i for i, k in enumerate(net.ids)}
    labels = []
    for k in ids:
        if k not in index or not seen[index[k]] or column[index[k]] < 0:
            raise InputError(f"{args.truth}: no {args.target} label for scored node {k!r}")
        labels.append(column[index[k]])
    labels = np.array(labels)
    n = labels.size
    rows = []
    for name, fn in (("auc", lambda idx: auc(scores[idx], labels[idx])),
                     (f"tpr_at_fpr_{args.fpr:g}", lambda idx: tpr_at_fpr(scores[idx], labels[idx], args.fpr))):
        s = bootstrap_ci(resampler=fn, n=n, confidence=args.confidence, resamples=args.resamples, seed=args.seed or 0)
        rows.append(f"{name},{s.mean:.6f},{s.ci_low:.6f},{s.ci_high:.6f},{n}")
    text = "metric,value,ci_low,ci_high,n\n" + "\n".join(rows) + "\n"
    if args.out:
        _atomic_write(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_experiment(args):
    cfg = load_config(args.config)
    seed = resolve_seed(cfg, args.seed)
    which = args.which or cfg.get("experiment")
    if which is None:
        raise ConfigError("experiment number missing (positional argument or 'experiment' key)")
    runs = args.runs if args.runs is not None else cfg.get("runs", 30)
    jobs = args.jobs if args.jobs is not None else cfg.get("jobs", 1)
    try:
        econf = ex.ExperimentConfig(
            experiment=str(which), runs=int(runs), base_seed=seed, jobs=int(jobs),
            fit=fit_config(cfg, 0), cohort=synth_config(cfg, 0),
            **_pick(cfg, ("target_fpr", "confidence", "resamples")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    def progress(done, total):
        if args.verbose:
            print(f"  {done}/{total}", file=sys.stderr, flush=True)

    results = ex.run_experiment(econf, progress)
    paths = ex.write_outputs(econf, results, args.out)
    failures = [{"grid_value": r.grid_value, "run": r.run, "error": r.error} for r in results if r.error]
    resolved = _resolved(econf.cohort, econf.fit, experiment=econf.experiment, runs=econf.runs,
                         target_fpr=econf.target_fpr, confidence=econf.confidence, resamples=econf.resamples)
    write_manifest(Path(args.out) / "manifest.json", "experiment", resolved, seed, paths, failures=failures)
    print(f"{econf.experiment}: {len(results) - len(failures)}/{len(results)} replicates ok; wrote {args.out}")
    return EXIT_FAILED_POINTS if failures else EXIT_OK


def read_names(path, expected):
    try:
        names = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise InputError(f"cannot read names {path}: {exc}") from None
    if len(names) != expected:
        raise InputError(f"{path}: {len(names)} names for {expected} features")
    return names


def weight_report(weights: model.PalsWeights, names, top=None):
    """Rows (block, rank, name, value), each block sorted by value descending, ties by name.

    ``top`` keeps only the k largest and k smallest entries per block.
    """
    blocks = {"u": list(zip(names, weights.u)),
              "w": list(zip(names, weights.w_sus)) + [("exposure", weights.w_e)]}
    rows = []
    for block, entries in blocks.items():
        entries = sorted(entries, key=lambda t: (-t[1], t[0]))
        if top is not None and 2 * top < len(entries):
            entries = entries[:top] + entries[-top:]
        rows += [(block, k + 1, name, float(v)) for k, (name, v) in enumerate(entries)]
    return rows


def cmd_report_weights(args):
    weights = _read_weights(args.weights)
    names = read_names(args.names, weights.feature_dim)
    rows = weight_report(weights, names, args.top)
    text = "block,rank,name,value\n" + "".join(f"{b},{r},{n},{v:.6f}\n" for b, r, n, v in rows)
    if args.out:
        _atomic_write(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="pals", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a synthetic train/test cohort")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="fit model weights on a labeled cohort")
    s.add_argument("--nodes", required=True)
    s.add_argument("--edges", required=True)
    s.add_argument("--truth", required=True, help="ground-truth file with y (and z_observed)")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--observed-spreaders", action="store_true", help="clamp spreaders marked z_observed")
    s.add_argument("--diagnostics", action="store_true", help="also write the variational state")
    s.add_argument("--out", required=True, help="weights JSON path")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="score main nodes of a cohort")
    s.add_argument("--weights", required=True)
    s.add_argument("--nodes", required=True)
    s.add_argument("--edges", required=True)
    s.add_argument("--truth")
    s.add_argument("--target", choices=("infection", "spreader"), default="infection")
    s.add_argument("--observed-spreaders", action="store_true")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("experiment", help="run a synthetic experiment grid")
    s.add_argument("which", nargs="?", choices=("1", "2", "3"))
    s.add_argument("--runs", type=int)
    s.add_argument("--jobs", type=int)
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("report-weights", help="rank learned weights by value")
    s.add_argument("--weights", required=True)
    s.add_argument("--names", required=True, help="one feature name per line")
    s.add_argument("--top", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_report_weights)

    s = sub.add_parser("eval", help="AUC and TPR at a fixed FPR with bootstrap intervals")
    s.add_argument("--scores", required=True)
    s.add_argument("--nodes", required=True)
    s.add_argument("--edges", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--target", choices=("infection", "spreader"), default="infection")
    s.add_argument("--fpr", type=float, default=0.1)
    s.add_argument("--confidence", type=float, default=0.95)
    s.add_argument("--resamples", type=int, default=1000)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InputError, FormatError, MetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, graph.BinningError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
