"""Command line pipeline around the dyadic construction.

Five subcommands cover the workflow end to end: ``gen`` writes example
spaces, ``build`` constructs nets, splines, and the wavelet basis into
an artifact directory, ``verify`` re-checks a built directory and emits
an analysis report, ``analyze`` expands a signal in the basis, and
``boundary`` samples boundary-layer frequencies.  All floats are
serialized with 17 significant digits and dictionary keys in a fixed
order, so the same configuration produces byte-identical files.
"""

import argparse
import hashlib
import json
import math
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (BadDelta, BadParams, DeltaTooLarge, DimensionMismatch,
                     DyadwaveError, MissingArtifact, NoConvergence,
                     NotPositiveDefinite, RankDeficiency, TooLarge,
                     exit_code_for)
from .lpanalysis import (build_lp, cz_kernel_bound, growth_sequence,
                         kernel_estimates, lp_equivalence, random_sign_operator,
                         random_signs, substitute_inequality_check)
from .nets import build_nets, load_nets_json, nets_to_dict, verify_nets
from .randgrid import (boundary_layer_stats, fit_boundary_exponent,
                       grid_checks, grid_labels, reference_order)
from .space import (GENERATOR_KINDS, exponent_a, gen_example, load_space_csv,
                    load_space_json, space_to_dict)
from .spline import SplineSystem, compute_splines, verify_splines
from .wavelet import (build_mra, build_wavelet_basis,
                      gram_decay_certificates, verify_wavelet_theorem)

# 0 is success, 1 is reserved for unexpected crashes, and the error
# classes own 2-14, so failed verification checks get their own code.
EXIT_CHECKS_FAILED = 20

CONFIG_DEFAULTS = {
    "input": None,
    "weights": None,
    "gen": None,
    "delta": 0.5,
    "seed": 0,
    "num_samples": 64,
    "num_trials": 100,
    "grid_samples": 32,
    "eps_grid": [0.02, 0.05, 0.1, 0.2, 0.4],
    "r_grid": [0.25, 0.5, 1.0],
    "p_list": [1.5, 2.0, 4.0],
    "pair_budget": 200_000,
    "tolerances": {"exact": 1e-12, "ortho": 1e-10},
    "out": "artifacts",
    "jobs": 1,
}

PARAM_NAMES = {
    "cyclic": ("n",),
    "interval": ("n",),
    "binary_tree": ("depth",),
    "point_cloud": ("n", "dim"),
    "koranyi_sphere": ("n", "dim"),
    "snowflake": ("n", "eps"),
}


# ---------------------------------------------------------------------------
# deterministic serialization

def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _clean(obj):
    """Plain python scalars, lists, and string keys, ready for dumping."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _key_order(key: str):
    try:
        return (0, int(key), "")
    except ValueError:
        return (1, 0, key)


def _dumps(obj, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = sorted(obj.items(), key=lambda kv: _key_order(kv[0]))
        inner = ",\n".join(f"{pad}  {json.dumps(k)}: {_dumps(v, indent + 1)}"
                           for k, v in items)
        return "{\n" + inner + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        parts = [_dumps(v, indent + 1) for v in obj]
        if any(isinstance(v, (dict, list)) for v in obj):
            inner = ",\n".join(pad + "  " + p for p in parts)
            return "[\n" + inner + "\n" + pad + "]"
        return "[" + ", ".join(parts) + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt(obj)
    return json.dumps(obj)


def _write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_json(path, payload) -> None:
    _write_text(path, _dumps(_clean(payload)) + "\n")


def write_csv(path, rows) -> None:
    M = np.atleast_2d(np.asarray(rows, dtype=float))
    lines = [",".join(_fmt(v) for v in row) for row in M]
    _write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# configuration

def _load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"config file {path} not found")
    if path.suffix == ".toml":
        try:
            import tomllib
        except ImportError as exc:
            raise BadParams("TOML configs need python >= 3.11; "
                            "use JSON instead") from exc
        try:
            payload = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise BadParams(f"bad TOML in {path}: {exc}") from exc
    else:
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise BadParams(f"bad JSON in {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise BadParams(f"config {path} must hold a table of settings")
    unknown = set(payload) - set(CONFIG_DEFAULTS)
    if unknown:
        raise BadParams(f"unknown config keys: {sorted(unknown)}")
    return payload


def _validate_config(cfg: dict) -> dict:
    delta = float(cfg["delta"])
    if not 0.0 < delta < 1.0:
        raise BadDelta(f"delta must lie in (0, 1), got {delta:g}")
    cfg["delta"] = delta
    tols = cfg["tolerances"]
    if not isinstance(tols, dict) or not tols:
        raise BadParams("tolerances must be a nonempty map")
    for name, val in tols.items():
        if not isinstance(val, (int, float)) or not val > 0:
            raise BadParams(f"tolerance {name!r} must be positive")
    for key in ("num_samples", "num_trials", "grid_samples",
                "pair_budget", "jobs"):
        cfg[key] = int(cfg[key])
        if cfg[key] < 1:
            raise BadParams(f"{key} must be at least 1")
    for key in ("eps_grid", "r_grid", "p_list"):
        vals = [float(v) for v in cfg[key]]
        if not vals or any(v <= 0 for v in vals):
            raise BadParams(f"{key} needs positive entries")
        cfg[key] = vals
    cfg["seed"] = int(cfg["seed"])
    return cfg


def _parse_gen_spec(tokens) -> dict:
    kind = tokens[0]
    if kind not in PARAM_NAMES:
        raise BadParams(f"unknown example kind {kind!r}; "
                        f"choose from {', '.join(GENERATOR_KINDS)}")
    names = PARAM_NAMES[kind]
    raw = tokens[1:]
    if len(raw) != len(names):
        raise BadParams(f"{kind} takes parameters {', '.join(names)}")
    params = {}
    for name, val in zip(names, raw):
        try:
            params[name] = float(val) if name == "eps" else int(val)
        except ValueError as exc:
            raise BadParams(f"parameter {name} for {kind} must be a number, "
                            f"got {val!r}") from exc
    return {"kind": kind, "params": params}


def resolve_build_config(args) -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    cfg["tolerances"] = dict(CONFIG_DEFAULTS["tolerances"])
    if args.config:
        payload = _load_config_file(args.config)
        tols = payload.pop("tolerances", None)
        if tols is not None:
            cfg["tolerances"].update(tols)
        cfg.update(payload)
    for key in ("input", "weights", "delta", "seed", "out", "grid_samples"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "gen", None):
        cfg["gen"] = _parse_gen_spec(args.gen)
    return _validate_config(cfg)


def _load_space(cfg):
    gen = cfg.get("gen")
    if gen:
        if cfg.get("input"):
            raise BadParams("give either an input file or a generator spec, "
                            "not both")
        return gen_example(gen["kind"], seed=cfg["seed"], **gen["params"])
    path = cfg.get("input")
    if not path:
        raise BadParams("no input space: pass --input PATH or --gen KIND ...")
    if not Path(path).exists():
        raise MissingArtifact(f"space file {path} not found")
    if cfg.get("weights"):
        return load_space_csv(path, cfg["weights"])
    return load_space_json(path)


def _versions() -> dict:
    import scipy
    return {
        "dyadwave": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _config_sha(core: dict) -> str:
    return hashlib.sha256(_dumps(_clean(core)).encode()).hexdigest()


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen(args) -> int:
    spec = _parse_gen_spec([args.kind] + args.params)
    space = gen_example(spec["kind"], seed=args.seed, **spec["params"])
    out = Path(args.out) if args.out else Path(f"{args.kind}.json")
    write_json(out, space_to_dict(space))
    print(f"wrote {spec['kind']} space with {space.n} points -> {out}")
    return 0


def _construct(space, delta):
    nets = build_nets(space, delta)
    ref = reference_order(space, nets)
    labels = grid_labels(space, nets, ref)
    system = compute_splines(space, nets, ref, labels)
    return nets, ref, labels, system


def cmd_build(args) -> int:
    cfg = resolve_build_config(args)
    space = _load_space(cfg)
    delta = cfg["delta"]
    try:
        nets, ref, labels, system = _construct(space, delta)
        mra = build_mra(space, system)
        basis = build_wavelet_basis(space, nets, mra)
    except (RankDeficiency, NotPositiveDefinite, NoConvergence,
            TooLarge) as exc:
        # conditioning loss and level-budget overflow are both how a
        # too-coarse delta surfaces on a concrete space
        raise DeltaTooLarge(
            f"construction failed at delta={delta:g} "
            f"({type(exc).__name__}: {exc}); use a smaller delta") from exc

    checks = {
        "nets": verify_nets(nets, space),
        "random_grid": grid_checks(space, nets, ref, labels, seed=cfg["seed"],
                                   num_samples=cfg["grid_samples"]),
        "splines": verify_splines(system, space, nets,
                                  tol=cfg["tolerances"]["exact"]),
        "wavelets": verify_wavelet_theorem(space, nets, basis,
                                           seed=cfg["seed"]),
    }
    bad = [name for name, rep in checks.items() if not rep["ok"]]
    if (checks["splines"]["outer_support_violations"]
            or checks["splines"]["inner_plateau_violations"]):
        bad.append("spline_support")
    if bad:
        print(_dumps(_clean(checks)), file=sys.stderr)
        raise DeltaTooLarge(
            f"exact invariants failed for {', '.join(bad)} at "
            f"delta={delta:g}; use a smaller delta")

    out = Path(cfg["out"])
    write_json(out / "space.json", space_to_dict(space))
    write_json(out / "nets.json", nets_to_dict(nets))
    (out / "splines").mkdir(parents=True, exist_ok=True)
    (out / "transitions").mkdir(parents=True, exist_ok=True)
    for k, vals in system.values.items():
        write_csv(out / "splines" / f"level_{k}.csv", vals)
    for k, T in system.transitions.items():
        write_csv(out / "transitions" / f"level_{k}.csv", T)
    write_csv(out / "basis_values.csv", basis.stacked())
    write_json(out / "basis.json", {
        "delta": basis.delta,
        "n": basis.n,
        "count": basis.count(),
        "k_min": nets.k_min,
        "k_max": nets.k_max,
        "levels": list(basis.levels),
        "index_sets": {k: basis.index_sets[k] for k in basis.levels},
        "mass_fine": {k: basis.mass_fine[k] for k in basis.levels},
        "mass_center": {k: basis.mass_center[k] for k in basis.levels},
        "constant_value": float(basis.constant[0]),
        "total_mass": space.total_mass,
        "row_labels": [["const" if k is None else k, c]
                       for k, c in basis.labels()],
    })
    core = {k: cfg[k] for k in cfg if k not in ("out", "jobs")}
    write_json(out / "build_config.json", {
        "config": core,
        "config_sha256": _config_sha(core),
        "versions": _versions(),
    })
    write_json(out / "build_report.json", {
        "n": space.n,
        "delta": delta,
        "a0": space.a0,
        "k_min": nets.k_min,
        "k_max": nets.k_max,
        "level_sizes": {k: len(nets.levels[k]) for k in nets.level_range},
        "checks": checks,
        "ok": True,
    })
    print(f"built {basis.count()} wavelets + constant over {space.n} points "
          f"-> {out}")
    return 0


def _require_artifacts(art: Path, names) -> None:
    missing = [nm for nm in names if not (art / nm).exists()]
    if missing:
        raise MissingArtifact(
            f"{art} is missing {', '.join(missing)}; run build first")


def _load_matrix(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def _chk(measured, tol) -> dict:
    m = float(measured)
    return {"measured": m, "tol": float(tol), "ok": bool(m <= tol)}


def cmd_verify(args) -> int:
    art = Path(args.artifacts)
    _require_artifacts(art, ["space.json", "nets.json", "basis.json",
                             "basis_values.csv", "build_config.json",
                             "splines", "transitions"])
    space = load_space_json(art / "space.json")
    nets = load_nets_json(art / "nets.json")
    stored = json.loads((art / "build_config.json").read_text())
    cfg = dict(CONFIG_DEFAULTS)
    cfg["tolerances"] = dict(CONFIG_DEFAULTS["tolerances"])
    for key, val in stored.get("config", {}).items():
        if key == "tolerances":
            cfg["tolerances"].update(val)
        elif key in cfg:
            cfg[key] = val
    if args.num_trials is not None:
        cfg["num_trials"] = args.num_trials
    if args.pair_budget is not None:
        cfg["pair_budget"] = args.pair_budget
    cfg = _validate_config(cfg)
    seed = cfg["seed"]
    tol_exact = float(cfg["tolerances"]["exact"])
    tol_ortho = float(cfg["tolerances"]["ortho"])
    n = space.n
    w = space.weights

    ref = reference_order(space, nets)
    labels = grid_labels(space, nets, ref)
    system = compute_splines(space, nets, ref, labels)
    mra = build_mra(space, system)
    basis = build_wavelet_basis(space, nets, mra)

    splines_dev = 0.0
    for k in nets.level_range:
        loaded = _load_matrix(art / "splines" / f"level_{k}.csv")
        if loaded.shape != system.values[k].shape:
            splines_dev = math.inf
            break
        splines_dev = max(splines_dev,
                          float(np.abs(loaded - system.values[k]).max()))
    trans_dev = 0.0
    for k in range(nets.k_min, nets.k_max):
        loaded = _load_matrix(art / "transitions" / f"level_{k}.csv")
        if loaded.shape != system.transitions[k].shape:
            trans_dev = math.inf
            break
        trans_dev = max(trans_dev,
                        float(np.abs(loaded - system.transitions[k]).max()))
    B = _load_matrix(art / "basis_values.csv")
    meta = json.loads((art / "basis.json").read_text())
    rebuilt = basis.stacked()
    basis_dev = (float(np.abs(B - rebuilt).max())
                 if B.shape == rebuilt.shape else math.inf)
    count = int(meta["count"])
    count_ok = count == n - 1 and B.shape == (count + 1, n)

    # direct checks on the loaded matrix, so corruption is caught even
    # when the rebuilt basis is healthy
    gram_dev = float(np.abs((B * w) @ B.T - np.eye(B.shape[0])).max())
    mean_dev = float(np.abs(B[1:] @ w).max()) if B.shape[0] > 1 else 0.0
    rng = np.random.default_rng(seed)
    sample = rng.standard_normal((n, n))
    recon_dev = float(np.abs(B.T @ (B @ (sample * w).T) - sample.T).max())

    nets_rep = verify_nets(nets, space)
    grid_rep = grid_checks(space, nets, ref, labels, seed=seed,
                           num_samples=cfg["grid_samples"])
    spl_rep = verify_splines(system, space, nets, tol=tol_exact)
    wav_rep = verify_wavelet_theorem(space, nets, basis, seed=seed)

    lp = build_lp(space, nets, basis)
    tele_dev = 0.0
    for k in lp.qproj:
        tele_dev = max(tele_dev, float(
            np.abs(lp.pproj[k + 1] - lp.pproj[k] - lp.qproj[k]).max()))
    kern = kernel_estimates(space, nets, lp, pair_budget=cfg["pair_budget"],
                            seed=seed)
    sym_dev = 0.0
    prow_dev = 0.0
    qrow_dev = 0.0
    for entry in kern["levels"].values():
        sym_dev = max(sym_dev, entry.get("p_sym_dev", 0.0))
        prow_dev = max(prow_dev, entry.get("p_rowsum_dev", 0.0))
        qrow_dev = max(qrow_dev, entry.get("q_rowsum_dev", 0.0))

    signs = random_signs(basis, seed=seed)
    T = random_sign_operator(space, basis, signs)
    iso_dev = float(np.abs(T.T @ (w[:, None] * T) - np.diag(w)).max())

    equivalence = {}
    if basis.count() > 0:
        for p in cfg["p_list"]:
            lo, hi = lp_equivalence(space, lp, p,
                                    num_trials=cfg["num_trials"], seed=seed)
            equivalence[f"{p:g}"] = {"lo": lo, "hi": hi,
                                     "num_trials": cfg["num_trials"]}
        lo2, hi2 = lp_equivalence(space, lp, 2.0,
                                  num_trials=cfg["num_trials"], seed=seed)
        parseval_dev = max(abs(lo2 - 1.0), abs(hi2 - 1.0))
    else:
        parseval_dev = 0.0

    exact = {
        "nets": {"ok": bool(nets_rep["ok"])},
        "random_grid": {"ok": bool(grid_rep["ok"])},
        "spline_partition": _chk(spl_rep["partition_dev"], tol_exact),
        "spline_interpolation": _chk(spl_rep["interpolation_dev"], tol_exact),
        "spline_refinement": _chk(spl_rep["refinement_dev"], tol_exact),
        "spline_stochastic": _chk(spl_rep["stochastic_dev"], tol_exact),
        "spline_persistence": _chk(spl_rep["persistence_dev"], tol_exact),
        "spline_nonnegative": _chk(-spl_rep["min_value"], tol_exact),
        "artifact_splines_match": _chk(splines_dev, tol_exact),
        "artifact_transitions_match": _chk(trans_dev, tol_exact),
        "artifact_basis_match": _chk(basis_dev, tol_exact),
        "config_hash": {"ok": _config_sha(stored.get("config", {}))
                        == stored.get("config_sha256")},
        "basis_count": {"measured": count, "expected": n - 1,
                        "ok": bool(count_ok)},
        "basis_gram": _chk(gram_dev, tol_ortho),
        "vanishing_mean": _chk(mean_dev, tol_ortho),
        "reconstruction": _chk(recon_dev, tol_ortho),
        "lp_telescoping": _chk(tele_dev, tol_exact),
        "kernel_symmetry": _chk(sym_dev, tol_ortho),
        "p_kernel_rowsum": _chk(prow_dev, tol_ortho),
        "q_kernel_rowsum": _chk(qrow_dev, tol_ortho),
        "parseval": _chk(parseval_dev, tol_ortho),
        "sign_isometry": _chk(iso_dev, tol_ortho),
    }
    ok = all(item["ok"] for item in exact.values())

    fits = {
        "wavelet_decay": dict(wav_rep["decay"], a=wav_rep["a"]),
        "wavelet_holder": wav_rep["holder"],
        "cz_bound": cz_kernel_bound(space, basis),
        "gram_certificates": gram_decay_certificates(space, nets, mra, basis),
        "kernel_estimates": kern,
        "norm_equivalence": equivalence,
        "substitute": substitute_inequality_check(space, nets, lp, nu=1.0,
                                                  gamma=1.0,
                                                  r_grid=cfg["r_grid"]),
        "growth_sample": growth_sequence(space, nets, 0, min(cfg["r_grid"])),
    }

    report = {
        "n": n,
        "delta": nets.delta,
        "a0": space.a0,
        "exponent_a": exponent_a(space),
        "seed": seed,
        "exact": exact,
        "fits": fits,
        "reports": {"nets": nets_rep, "random_grid": grid_rep,
                    "splines": spl_rep, "wavelets": wav_rep},
        "ok": ok,
        "provenance": {"config_sha256": stored.get("config_sha256"),
                       "versions": _versions()},
    }
    report_path = Path(args.report) if args.report else art / "report.json"
    write_json(report_path, report)

    for name in sorted(exact):
        print(f"{'PASS' if exact[name]['ok'] else 'FAIL'} {name}")
    passed = sum(1 for item in exact.values() if item["ok"])
    status = "ok" if ok else "FAILED"
    print(f"verify: {status} ({passed}/{len(exact)} exact checks) "
          f"-> {report_path}")
    return 0 if ok else EXIT_CHECKS_FAILED


def cmd_analyze(args) -> int:
    art = Path(args.artifacts)
    _require_artifacts(art, ["space.json", "basis.json", "basis_values.csv"])
    space = load_space_json(art / "space.json")
    B = _load_matrix(art / "basis_values.csv")
    meta = json.loads((art / "basis.json").read_text())
    if not Path(args.signal).exists():
        raise MissingArtifact(f"signal file {args.signal} not found")
    signal = np.loadtxt(args.signal, delimiter=",", ndmin=1).ravel()
    if signal.shape != (space.n,):
        raise DimensionMismatch(
            f"signal has {signal.size} values for {space.n} points")

    w = space.weights
    coeffs = B @ (w * signal)
    recon_dev = float(np.abs(B.T @ coeffs - signal).max())
    energy = float(w @ signal ** 2)
    coeff_energy = float(coeffs @ coeffs)
    parseval_abs = abs(coeff_energy - energy)
    parseval_rel = parseval_abs / max(energy, 1e-300)

    row_labels = meta["row_labels"]
    sf2 = np.zeros(space.n)
    for k in sorted({lvl for lvl, _ in row_labels if lvl != "const"}):
        rows = [i for i, (lvl, _) in enumerate(row_labels) if lvl == k]
        contrib = B[rows].T @ coeffs[rows]
        sf2 += contrib ** 2
    sf = np.sqrt(sf2)

    out = Path(args.out) if args.out else art
    coeff_lines = ["# level,center,coefficient"]
    coeff_lines += [f"{lvl},{center},{_fmt(c)}"
                    for (lvl, center), c in zip(row_labels, coeffs)]
    _write_text(out / "coefficients.csv", "\n".join(coeff_lines) + "\n")
    sf_lines = ["# index,square_function"]
    sf_lines += [f"{i},{_fmt(v)}" for i, v in enumerate(sf)]
    _write_text(out / "sf.csv", "\n".join(sf_lines) + "\n")
    write_json(out / "analyze_report.json", {
        "n": space.n,
        "signal": str(args.signal),
        "energy": energy,
        "coeff_energy": coeff_energy,
        "parseval_abs": parseval_abs,
        "parseval_rel": parseval_rel,
        "recon_dev": recon_dev,
        "mean_coefficient": float(coeffs[0]),
        "sf_l2": float(math.sqrt(w @ sf2)),
    })
    print(f"analyzed {space.n} values: parseval residual {parseval_abs:.3e}, "
          f"reconstruction deviation {recon_dev:.3e} -> {out}")
    return 0


def cmd_boundary(args) -> int:
    art = Path(args.artifacts)
    _require_artifacts(art, ["space.json", "nets.json", "build_config.json"])
    space = load_space_json(art / "space.json")
    nets = load_nets_json(art / "nets.json")
    stored = json.loads((art / "build_config.json").read_text())
    cfg = dict(CONFIG_DEFAULTS)
    for key, val in stored.get("config", {}).items():
        if key in cfg and key != "tolerances":
            cfg[key] = val
    if args.num_samples is not None:
        cfg["num_samples"] = args.num_samples
    if args.eps_grid is not None:
        cfg["eps_grid"] = args.eps_grid
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.jobs is not None:
        cfg["jobs"] = args.jobs
    num_samples = int(cfg["num_samples"])
    if num_samples < 1:
        raise BadParams("num_samples must be at least 1")
    eps_grid = [float(e) for e in cfg["eps_grid"]]
    if not eps_grid or any(e <= 0 for e in eps_grid):
        raise BadParams("eps_grid needs positive entries")

    ref = reference_order(space, nets)
    labels = grid_labels(space, nets, ref)
    stats = boundary_layer_stats(space, nets, ref, labels, eps_grid,
                                 num_samples, int(cfg["seed"]),
                                 jobs=int(cfg["jobs"]))
    fit = fit_boundary_exponent(stats)

    out = Path(args.out) if args.out else art
    lines = ["# x,k,eps,freq,stderr"]
    freq = stats["freq"]
    stderr = stats["per_cell_stderr"]
    for li, k in enumerate(stats["levels"]):
        for ei, eps in enumerate(stats["eps_grid"]):
            for x in range(space.n):
                lines.append(f"{x},{k},{_fmt(eps)},{_fmt(freq[li, ei, x])},"
                             f"{_fmt(stderr[li, ei, x])}")
    _write_text(out / "boundary.csv", "\n".join(lines) + "\n")
    write_json(out / "boundary_fit.json", {
        "eta": fit.get("eta"),
        "log_c": fit.get("log_c"),
        "ci95": fit.get("ci95"),
        "stderr": fit.get("stderr"),
        "r2": fit.get("r2"),
        "n_points": fit.get("n_points"),
        "eps_grid": stats["eps_grid"],
        "levels": stats["levels"],
        "num_samples": stats["num_samples"],
        "mean_freq": stats["mean_freq"],
        "seed": int(cfg["seed"]),
    })
    eta = fit.get("eta", math.nan)
    lo, hi = fit.get("ci95", (math.nan, math.nan))
    print(f"boundary exponent {eta:.4f} (95% CI [{lo:.4f}, {hi:.4f}]) "
          f"over {num_samples} samples -> {out}")
    return 0


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyadwave",
        description="dyadic nets, splines, wavelets, and their diagnostics "
                    "on finite quasi-metric spaces")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write an example space as JSON")
    g.add_argument("kind", choices=GENERATOR_KINDS)
    g.add_argument("params", nargs="*",
                   help="generator parameters in order, e.g. n [dim]")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=None,
                   help="output path (default <kind>.json)")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("build",
                       help="construct nets, splines, and the wavelet basis")
    b.add_argument("--config", default=None,
                   help="JSON or TOML settings file")
    b.add_argument("--input", default=None, help="space JSON, or distance "
                   "CSV when --weights is given")
    b.add_argument("--weights", default=None, help="weights CSV")
    b.add_argument("--gen", nargs="+", default=None, metavar="ARG",
                   help="generator spec, e.g. --gen cyclic 8")
    b.add_argument("--delta", type=float, default=None)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--grid-samples", dest="grid_samples", type=int,
                   default=None)
    b.add_argument("--out", default=None, help="artifact directory")
    b.set_defaults(func=cmd_build)

    v = sub.add_parser("verify",
                       help="re-check a built directory and write a report")
    v.add_argument("--artifacts", default="artifacts")
    v.add_argument("--report", default=None,
                   help="report path (default <artifacts>/report.json)")
    v.add_argument("--num-trials", dest="num_trials", type=int, default=None)
    v.add_argument("--pair-budget", dest="pair_budget", type=int,
                   default=None)
    v.set_defaults(func=cmd_verify)

    a = sub.add_parser("analyze", help="expand a signal in the basis")
    a.add_argument("--artifacts", default="artifacts")
    a.add_argument("--signal", required=True,
                   help="CSV with one value per point")
    a.add_argument("--out", default=None,
                   help="output directory (default: the artifact directory)")
    a.set_defaults(func=cmd_analyze)

    d = sub.add_parser("boundary",
                       help="sample boundary-layer frequencies and fit "
                            "the exponent")
    d.add_argument("--artifacts", default="artifacts")
    d.add_argument("--num-samples", dest="num_samples", type=int,
                   default=None)
    d.add_argument("--eps-grid", dest="eps_grid", type=float, nargs="+",
                   default=None)
    d.add_argument("--seed", type=int, default=None)
    d.add_argument("--jobs", type=int, default=None)
    d.add_argument("--out", default=None,
                   help="output directory (default: the artifact directory)")
    d.set_defaults(func=cmd_boundary)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except DyadwaveError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":    # pragma: no cover
    raise SystemExit(main())
