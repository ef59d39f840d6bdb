"""Batch experiment runner.

Usage: ``fraclap <experiment> --config cfg.json [--out dir] [--golden dir]``

Exit codes: 0 ok, 1 acceptance/golden failure, 2 configuration error,
3 accuracy (tolerance) failure. Outputs are deterministic for a given
config on a given build: fixed reduction orders, no wall-clock values.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import AccuracyError, ConfigError, FraclapError, \
    SchemaMismatchError
from .manifold import Field, build_mesh, build_sphere, build_torus
from .kernel import (SubordinationQuadrature, asymptotic_defect_report,
                     constants, euclidean_kernel_model, ks)
from . import heat as heat_mod
from . import fracops, extension, monotonicity, reporting

EXPERIMENTS = ("eigs", "heat", "kernel", "fraclap", "seminorm", "perimeter",
               "extension", "monotonicity", "pv_equivalence", "scaling",
               "defect")


@dataclass
class ExperimentConfig:
    """Validated experiment description (see ``config_schema``)."""

    experiment: str
    manifold: dict
    s_values: list[float]
    quad_overrides: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    out_dir: str = "out"
    golden_dir: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        exp = raw.get("experiment")
        if exp not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, "
                              f"got {exp!r}")
        man = raw.get("manifold")
        if not isinstance(man, dict) or man.get("kind") not in (
                "torus", "sphere", "mesh"):
            raise ConfigError("manifold.kind must be torus|sphere|mesh")
        frac = raw.get("frac", {})
        svals = [float(s) for s in np.atleast_1d(frac.get("s", [0.5]))]
        for s in svals:
            if not 0.0 < s < 2.0:
                raise ConfigError(f"s={s} outside (0, 2)")
        if exp == "perimeter":
            for s in svals:
                if not 0.0 < s < 1.0:
                    raise ConfigError(f"perimeter requires s in (0,1), "
                                      f"got {s}")
        return cls(
            experiment=exp, manifold=man, s_values=svals,
            quad_overrides=frac.get("quad", {}),
            params=raw.get("experiment_params", {}),
            out_dir=raw.get("output", {}).get("dir", "out"),
            golden_dir=raw.get("golden", {}).get("dir"),
        )


def config_schema() -> dict:
    """Published JSON schema (informal) of the config format."""
    return {
        "experiment": f"one of {EXPERIMENTS}",
        "manifold": {
            "kind": "torus|sphere|mesh",
            "torus": {"dim": "int", "lengths": "[float]", "grid": "[int]",
                      "k_max": "int"},
            "sphere": {"radius": "float", "l_max": "int",
                       "nodes_per_band": "int (optional)"},
            "mesh": {"path": "OFF file", "k_max": "int",
                     "curvature_bound": "float"},
        },
        "frac": {"s": "[float in (0,2)]",
                 "quad": {"points_per_panel": "int",
                          "panel_width": "float"}},
        "experiment_params": "experiment-specific knobs",
        "output": {"dir": "report directory"},
        "golden": {"dir": "golden directory with tolerances.json"},
    }


def _build_manifold(cfg: ExperimentConfig):
    man = cfg.manifold
    kind = man["kind"]
    try:
        if kind == "torus":
            return build_torus(int(man["dim"]), man["lengths"], man["grid"],
                               int(man["k_max"]))
        if kind == "sphere":
            return build_sphere(float(man["radius"]), int(man["l_max"]),
                                man.get("nodes_per_band"))
        with open(man["path"]) as f:
            return build_mesh(f.read(), int(man["k_max"]),
                              float(man.get("curvature_bound", 0.0)))
    except KeyError as e:
        raise ConfigError(f"manifold config missing {e}") from e


def _quad_for(M, s, cfg: ExperimentConfig):
    try:
        return SubordinationQuadrature.for_manifold(M, s,
                                                    **cfg.quad_overrides)
    except TypeError as e:
        raise ConfigError(f"bad frac.quad override: {e}") from e


def _meta(cfg: ExperimentConfig, M, s=None):
    meta = {"config_digest": reporting.digest_of(
        {"experiment": cfg.experiment, "manifold": cfg.manifold,
         "s": cfg.s_values, "quad": cfg.quad_overrides,
         "params": cfg.params}),
        "manifold_digest": reporting.manifold_digest(M)}
    if s is not None:
        meta["s"] = reporting.fmt(s)
    return meta


def _default_field(M) -> Field:
    """Smooth default test field: a low-mode combination."""
    if M.kind == "torus":
        x = M.nodes[:, 0] * (2.0 * np.pi / M.meta["lengths"][0])
        return Field(M, np.cos(x) + 0.3 * np.cos(3.0 * x))
    if M.kind == "sphere":
        th, ph = M.nodes[:, 0], M.nodes[:, 1]
        return Field(M, np.cos(th) + 0.4 * np.sin(th) ** 2 * np.cos(2 * ph))
    return Field(M, M.eigenvectors[:, 1] + 0.3 * M.eigenvectors[:, 2])


def _indicator(M, cfg) -> Field:
    """Axis-0 strip indicator; fraction configurable."""
    frac = float(cfg.params.get("strip_fraction", 0.25))
    if M.kind != "torus":
        raise ConfigError("indicator experiments require a torus manifold")
    L = M.meta["lengths"][0]
    x = M.nodes[:, 0]
    return Field(M, ((x >= 0.25 * L) & (x < (0.25 + frac) * L))
                 .astype(float))


# ---------------------------------------------------------------------------
# experiment bodies: each returns a list of written file paths

def _run_eigs(cfg, M, out):
    rows = [{"k": k, "eigenvalue": float(lam)}
            for k, lam in enumerate(M.eigenvalues)]
    path = os.path.join(out, "eigenvalues.csv")
    reporting.write_csv(path, rows, _meta(cfg, M))
    jpath = os.path.join(out, "manifold.json")
    reporting.write_json(jpath, M.summary(), _meta(cfg, M))
    return [path, jpath]


def _run_heat(cfg, M, out):
    H = heat_mod.HeatEvaluator(M)
    p = int(cfg.params.get("p", 0))
    q = int(cfg.params.get("q", min(3, M.n_nodes - 1)))
    ts = np.geomspace(float(cfg.params.get("t_min", H.t_gauss)),
                      float(cfg.params.get("t_max", 2.0)), 25)
    rows = heat_mod.heat_trace_rows(H, p, q, ts)
    for row in rows:
        row["mass_error"] = abs(heat_mod.heat_mass(H, p, row["t"]) - 1.0)
        if M.kind == "torus":
            img = heat_mod.heat_kernel_torus_images(
                M.meta["lengths"], M.nodes[p], M.nodes[q], row["t"])
            row["image_sum"] = img
    path = os.path.join(out, "heat_trace.csv")
    reporting.write_csv(path, rows, _meta(cfg, M))
    pairs = [(p, q), (p, (q * 3 + 1) % M.n_nodes)]
    env = heat_mod.gaussian_envelope_report(H, pairs, ts)
    jpath = os.path.join(out, "heat_envelope.json")
    reporting.write_json(jpath, env, _meta(cfg, M))
    return [path, jpath]


def _run_kernel(cfg, M, out):
    paths = []
    if M.kind != "torus":
        raise ConfigError("kernel slice experiment expects a torus")
    for s in cfg.s_values:
        par = constants(M.dim, s)
        quad = _quad_for(M, s, cfg)
        g = int(M.meta["grid"][0])
        idxs = [i for i in range(1, g // 2)][:int(cfg.params.get(
            "max_points", 40))]
        stride = M.n_nodes // g if M.dim > 1 else 1
        rows = []
        for i in idxs:
            d = i * M.meta["lengths"][0] / g
            val = ks(M, 0, i * stride, par, quad)
            model = float(euclidean_kernel_model(M, par, np.array([d]))[0])
            rows.append({"distance": d, "kernel": val,
                         "euclidean_model": model, "ratio": val / model})
        path = os.path.join(out, f"kernel_slice_s{s:g}.csv")
        reporting.write_csv(path, rows, _meta(cfg, M, s))
        paths.append(path)
    return paths


def _run_fraclap(cfg, M, out):
    u = _default_field(M)
    paths = []
    for s in cfg.s_values:
        par = constants(M.dim, s)
        quad = _quad_for(M, s, cfg)
        sp = fracops.fraclap_spectral(M, u, par)
        bo = fracops.fraclap_bochner(M, u, par, quad)
        pv = fracops.fraclap_pv(M, u, par,
                                fracops.PvScheme.default(M), quad)
        dt = extension.dtn(extension.extend(M, u, par))
        rows = [{"node": i, "spectral": sp.values[i],
                 "bochner": bo.values[i], "pv": pv.values[i],
                 "dtn": dt.values[i]} for i in range(M.n_nodes)]
        path = os.path.join(out, f"fraclap_routes_s{s:g}.csv")
        reporting.write_csv(path, rows, _meta(cfg, M, s))
        scale = float(np.max(np.abs(sp.values)))
        summary = {
            "sup_spectral": scale,
            "bochner_dev": float(np.max(np.abs(bo.values - sp.values))),
            "pv_dev": float(np.max(np.abs(pv.values - sp.values))),
            "dtn_dev": float(np.max(np.abs(dt.values - sp.values))),
        }
        jpath = os.path.join(out, f"fraclap_summary_s{s:g}.json")
        reporting.write_json(jpath, summary, _meta(cfg, M, s))
        paths += [path, jpath]
    return paths


def _run_seminorm(cfg, M, out):
    u = _default_field(M)
    paths = []
    for s in cfg.s_values:
        par = constants(M.dim, s)
        quad = _quad_for(M, s, cfg)
        ssp = fracops.seminorm_spectral(M, u, par)
        sdi = fracops.seminorm_double_integral(M, u, par, quad)
        sen = extension.extension_energy(extension.extend(M, u, par))
        obj = {"spectral": ssp, "double_integral": sdi,
               "extension_energy": sen,
               "double_rel_dev": abs(sdi - ssp) / ssp,
               "extension_rel_dev": abs(sen - ssp) / ssp}
        path = os.path.join(out, f"seminorm_s{s:g}.json")
        reporting.write_json(path, obj, _meta(cfg, M, s))
        paths.append(path)
    return paths


def _run_perimeter(cfg, M, out):
    E = _indicator(M, cfg)
    E2 = Field(M, ((M.nodes[:, 0] >= 0.1 * M.meta["lengths"][0])
                   & (M.nodes[:, 0] < 0.5 * M.meta["lengths"][0]))
               .astype(float))
    rows = fracops.perimeter_limit_report(
        M, {"strip_a": E, "strip_b": E2}, cfg.s_values)
    path = os.path.join(out, "perimeter.csv")
    reporting.write_csv(path, rows, _meta(cfg, M))
    return [path]


def _run_extension(cfg, M, out):
    paths = []
    for s in cfg.s_values:
        par = constants(M.dim, s)
        zs = extension.default_z_grid(8.0)
        rows = []
        id_rows = []
        for lam in (1.0, 4.0, 9.0):
            prof = extension.mode_profile(lam, s, zs)
            rows += [{"lambda": lam, "z": float(z), "value": float(v)}
                     for z, v in zip(zs, prof)]
            e = extension.mode_energy(lam, s, zs)
            id_rows.append({
                "lambda": lam, "s": s,
                "beta_times_energy": par.beta_s * e,
                "lambda_pow": lam ** (0.5 * s),
                "rel_dev": abs(par.beta_s * e - lam ** (0.5 * s))
                / lam ** (0.5 * s),
                "pde_residual": extension.profile_pde_residual(lam, s),
            })
        p1 = os.path.join(out, f"profiles_s{s:g}.csv")
        reporting.write_csv(p1, rows, _meta(cfg, M, s))
        p2 = os.path.join(out, f"energy_identity_s{s:g}.csv")
        reporting.write_csv(p2, id_rows, _meta(cfg, M, s))
        paths += [p1, p2]
    return paths


def _run_monotonicity(cfg, M, out):
    s = cfg.s_values[0]
    par = constants(M.dim, s)
    spec = fracops.EnergySpec(cfg.params.get("potential", "zero"), par)
    if M.kind == "torus":
        ind = _indicator(M, cfg)
        u = Field(M, 2.0 * ind.values - 1.0)
        L = float(M.meta["lengths"][0])
        x0 = 0.25 * L
        i0 = int(np.argmin(np.sum((M.nodes - np.array(
            [x0] + [0.5 * l for l in M.meta["lengths"][1:]])) ** 2, axis=1)))
    else:
        u = _default_field(M)
        i0 = int(cfg.params.get("center", 0))
    cap = M.injectivity_radius / 4.0
    radii = np.linspace(float(cfg.params.get("r_lo_frac", 0.64)) * cap,
                        cap, int(cfg.params.get("n_radii", 8)))
    zg = extension.default_z_grid(float(cfg.params.get("z_max", 5 * cap)))
    hb = monotonicity.HalfBallQuadrature(center=i0, radii=radii, z_grid=zg)
    rep = monotonicity.monotonicity_sweep(
        M, u, spec, hb, C_drift=cfg.params.get("C_drift"))
    path = os.path.join(out, "monotonicity.csv")
    reporting.write_csv(path, rep.rows(), _meta(cfg, M, s))
    verdict = {
        "monotone": rep.monotone, "min_drift_step": rep.min_drift_step,
        "constancy_spread": rep.constancy_spread,
        "drift_constant": rep.drift_constant,
        "gibbs_overshoot": rep.gibbs_overshoot,
    }
    jpath = os.path.join(out, "monotonicity_verdict.json")
    reporting.write_json(jpath, verdict, _meta(cfg, M, s))
    return [path, jpath]


def _run_pv_equivalence(cfg, M, out):
    u = _default_field(M)
    paths = []
    for s in cfg.s_values:
        par = constants(M.dim, s)
        quad = _quad_for(M, s, cfg)
        fields = {}
        for fam in fracops.PV_FAMILIES:
            fields[fam] = fracops.fraclap_pv(
                M, u, par, fracops.PvScheme.default(M, fam), quad).values
        scale = max(float(np.max(np.abs(v))) for v in fields.values())
        diffs = {}
        fams = list(fields)
        for i, f1 in enumerate(fams):
            for f2 in fams[i + 1:]:
                diffs[f"{f1}|{f2}"] = float(
                    np.max(np.abs(fields[f1] - fields[f2]))) / scale
        obj = {"pairwise_rel_diffs": diffs, "scale": scale,
               "max_pairwise": max(diffs.values())}
        path = os.path.join(out, f"pv_equivalence_s{s:g}.json")
        reporting.write_json(path, obj, _meta(cfg, M, s))
        paths.append(path)
    return paths


def _run_scaling(cfg, M, out):
    if M.kind != "torus":
        raise ConfigError("scaling experiment expects a torus")
    rows = []
    man = cfg.manifold
    for s in cfg.s_values:
        par = constants(M.dim, s)
        quad = _quad_for(M, s, cfg)
        for r in cfg.params.get("ratios", (0.5, 2.0)):
            M2 = build_torus(M.dim, [r * l for l in man["lengths"]],
                             man["grid"], int(man["k_max"]))
            quad2 = _quad_for(M2, s, cfg)
            devs = []
            for q in (1, M.n_nodes // 3, M.n_nodes // 2):
                k1 = ks(M, 0, q, par, quad)
                k2 = ks(M2, 0, q, par, quad2)
                devs.append(abs(k2 - r ** (-(M.dim + s)) * k1)
                            / (r ** (-(M.dim + s)) * k1))
            rows.append({"s": s, "ratio": r, "max_rel_dev": max(devs)})
    path = os.path.join(out, "scaling.csv")
    reporting.write_csv(path, rows, _meta(cfg, M))
    return [path]


def _run_defect(cfg, M, out):
    paths = []
    for s in cfg.s_values:
        par = constants(M.dim, s)
        quad = _quad_for(M, s, cfg)
        cap = M.injectivity_radius / 4.0
        radii = np.geomspace(float(cfg.params.get("d_min", 0.01)),
                             min(float(cfg.params.get("d_max", 0.5)), cap),
                             int(cfg.params.get("n_radii", 12)))
        if M.kind == "torus":
            dirs = [np.eye(M.dim)[0]]
        else:
            dirs = [0]
        rows = asymptotic_defect_report(M, int(cfg.params.get("p", 0)),
                                        dirs, radii, par, quad)
        path = os.path.join(out, f"defect_s{s:g}.csv")
        reporting.write_csv(path, rows, _meta(cfg, M, s))
        paths.append(path)
    return paths


_RUNNERS = {
    "eigs": _run_eigs, "heat": _run_heat, "kernel": _run_kernel,
    "fraclap": _run_fraclap, "seminorm": _run_seminorm,
    "perimeter": _run_perimeter, "extension": _run_extension,
    "monotonicity": _run_monotonicity, "pv_equivalence": _run_pv_equivalence,
    "scaling": _run_scaling, "defect": _run_defect,
}


def run(config: ExperimentConfig) -> int:
    """Execute one experiment; returns the process exit status.

    Raises ConfigError / AccuracyError / SchemaMismatchError for the
    caller (or ``main``) to map onto exit codes.
    """
    M = _build_manifold(config)
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    written = _RUNNERS[config.experiment](config, M, out)
    for path in written:
        reporting.validate_report(path)

    if config.golden_dir:
        manifest_path = os.path.join(config.golden_dir, "tolerances.json")
        if not os.path.exists(manifest_path):
            raise SchemaMismatchError(
                f"golden dir lacks tolerances.json: {config.golden_dir}")
        with open(manifest_path) as f:
            manifest = json.load(f)
        ok = True
        for path in written:
            if not path.endswith(".csv"):
                continue
            name = os.path.basename(path)
            gpath = os.path.join(config.golden_dir, name)
            if not os.path.exists(gpath):
                continue
            result = reporting.compare_golden(path, gpath,
                                              manifest.get(name, {}))
            if not result["ok"]:
                print(f"golden mismatch in {name}: {result['columns']}",
                      file=sys.stderr)
                ok = False
        if not ok:
            return 1
    return 0


def compare_golden(report_path: str, golden_path: str,
                   tolerance_manifest: str) -> dict:
    """CLI-level golden comparison (see reporting.compare_golden)."""
    with open(tolerance_manifest) as f:
        tolerances = json.load(f)
    name = os.path.basename(report_path)
    return reporting.compare_golden(report_path, golden_path,
                                    tolerances.get(name, tolerances))


def _constants_query(argv) -> int:
    parser = argparse.ArgumentParser(prog="fraclap constants")
    parser.add_argument("--n", type=int, required=True)
    parser.add_argument("--s", type=float, required=True)
    args = parser.parse_args(argv)
    try:
        par = constants(args.n, args.s)
    except FraclapError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    print(json.dumps({"n": par.n, "s": par.s,
                      "alpha_ns": par.alpha_ns, "beta_s": par.beta_s,
                      "c_s": par.c_s}, indent=1, sort_keys=True))
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if argv and argv[0] == "constants":
        return _constants_query(argv[1:])
    parser = argparse.ArgumentParser(
        prog="fraclap",
        description="fractional-calculus experiment runner "
                    "(also: fraclap constants --n N --s S)")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--golden", default=None)
    args = parser.parse_args(argv)
    try:
        with open(args.config) as f:
            raw = json.load(f)
        raw["experiment"] = args.experiment
        cfg = ExperimentConfig.from_dict(raw)
        if args.out:
            cfg.out_dir = args.out
        if args.golden:
            cfg.golden_dir = args.golden
        return run(cfg)
    except (ConfigError, json.JSONDecodeError, FileNotFoundError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except AccuracyError as e:
        print(f"accuracy error: {e}", file=sys.stderr)
        return 3
    except SchemaMismatchError as e:
        print(f"incompatibility: {e}", file=sys.stderr)
        return 1
    except FraclapError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
