"""Command-line driver: mesh generation, Robin solves, evolutions, checks.

Configuration is a flat ``key = value`` text file plus repeatable
``--set key=value`` overrides (later wins). Every output file starts with a
comment header embedding the full resolved configuration, and identical
config + seed produce bit-identical outputs.

Exit codes: 0 success, 1 verification finding, 2 usage/config error,
3 numerical failure.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checks, heatmap, semigroup
from .assembly import (BoundaryCoefficient, assemble, integration_errors,
                       nodal_interior_values)
from .expressions import ExpressionError, compile_expression, parse_complex
from .linalg import SingularMatrixError
from .mesh import (MeshError, generate_lshape, generate_rectangle,
                   quality_report, read_mesh, write_mesh)
from .semigroup import WentzellOperator, choose_omega0, evolve, robin_solve

EXIT_OK = 0
EXIT_FINDING = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    pass


class Config:
    """Flat key = value configuration with typed access and default tracking.

    Every key read (including defaults that applied) lands in ``resolved``,
    so output headers reproduce the exact effective configuration.
    """

    def __init__(self, data):
        self.data = dict(data)
        self.resolved = {}

    @classmethod
    def load(cls, path=None, overrides=()):
        data = {}
        if path is not None:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config file: {exc}") from exc
            for lineno, raw in enumerate(text.splitlines(), start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, val = line.split("=", 1)
                data[key.strip()] = val.strip()
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set needs key=value, got '{item}'")
            key, val = item.split("=", 1)
            data[key.strip()] = val.strip()
        return cls(data)

    def _record(self, key, value):
        self.resolved[key] = value
        return value

    def has(self, key):
        return key in self.data

    def get_str(self, key, default=None):
        return self._record(key, self.data.get(key, default))

    def get_int(self, key, default=None):
        raw = self.data.get(key)
        if raw is None:
            return self._record(key, default)
        try:
            return self._record(key, int(raw))
        except ValueError as exc:
            raise ConfigError(f"key '{key}' must be an integer, got '{raw}'") from exc

    def get_float(self, key, default=None):
        raw = self.data.get(key)
        if raw is None:
            return self._record(key, default)
        try:
            return self._record(key, float(raw))
        except ValueError as exc:
            raise ConfigError(f"key '{key}' must be a number, got '{raw}'") from exc

    def get_bool(self, key, default=False):
        raw = self.data.get(key)
        if raw is None:
            return self._record(key, default)
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return self._record(key, True)
        if low in ("0", "false", "no", "off"):
            return self._record(key, False)
        raise ConfigError(f"key '{key}' must be a boolean, got '{raw}'")

    def header_pairs(self):
        items = dict(self.data)
        items.update({k: v for k, v in self.resolved.items() if v is not None})
        return [(k, items[k]) for k in sorted(items)]


def build_mesh(cfg):
    domain = cfg.get_str("domain", "rectangle")
    resolution = cfg.get_int("resolution", 16)
    if resolution is None or resolution < 1:
        raise ConfigError("resolution must be a positive integer")
    if domain == "rectangle":
        width = cfg.get_float("width", 1.0)
        height = cfg.get_float("height", 1.0)
        try:
            return generate_rectangle(width, height, resolution, resolution)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if domain == "lshape":
        return generate_lshape(resolution)
    path = Path(domain)
    if not path.exists():
        raise ConfigError(f"domain '{domain}' is neither rectangle, lshape, "
                          "nor an existing mesh file")
    return read_mesh(path)


def build_beta(cfg, mesh):
    arc_keys = {k: v for k, v in cfg.data.items() if k.startswith("beta.")}
    if arc_keys:
        base = cfg.get_str("beta", "0")
        values = {lab: parse_complex(base) for lab in mesh.arc_labels()}
        for key, val in sorted(arc_keys.items()):
            label = key[len("beta."):]
            values[label] = parse_complex(val)
            cfg._record(key, val)
        try:
            return BoundaryCoefficient.from_arc_values(mesh, values)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raw = cfg.get_str("beta", "0")
    try:
        return BoundaryCoefficient.constant(mesh, parse_complex(raw))
    except ExpressionError:
        fn = compile_expression(raw)
        return BoundaryCoefficient.from_function(mesh, fn)


def read_state_csv(path):
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line or line.startswith("index"):
                continue
            parts = line.split(",")
            values.append((int(parts[0]), float(parts[3]) + 1j * float(parts[4])))
    values.sort()
    return np.array([v for _, v in values])


def write_state_csv(path, mesh, values, header_pairs=()):
    with open(path, "w", encoding="utf-8") as fh:
        for key, val in header_pairs:
            fh.write(f"# {key} = {val}\n")
        fh.write("index,x,y,re,im\n")
        for i, ((x, y), v) in enumerate(zip(mesh.vertices, values)):
            fh.write(f"{i},{x:.17g},{y:.17g},{v.real:.17g},{v.imag:.17g}\n")


def build_initial(cfg, bundle):
    raw = cfg.get_str("initial", "1")
    if raw.startswith("@"):
        values = read_state_csv(raw[1:])
        if len(values) != bundle.n_total:
            raise ConfigError(f"initial state file has {len(values)} values, "
                              f"mesh has {bundle.n_total} vertices")
        return bundle.state(values)
    fn = compile_expression(raw)
    return bundle.state(nodal_interior_values(bundle.mesh, fn))


def out_dir(cfg):
    out = Path(cfg.get_str("out", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_mesh(cfg):
    mesh = build_mesh(cfg)
    out = out_dir(cfg)
    rep = quality_report(mesh)
    header = [f"{k} = {v}" for k, v in cfg.header_pairs()]
    write_mesh(mesh, out / "mesh.wmesh", header_lines=header)
    lines = {
        "n_vertices": mesh.n_vertices,
        "n_triangles": mesh.n_triangles,
        "n_boundary_edges": len(mesh.boundary_edges),
        "boundary_loops": mesh.n_boundary_loops,
        "area": f"{mesh.area():.17g}",
        "perimeter": f"{mesh.perimeter():.17g}",
        "max_angle": f"{rep.max_angle:.17g}",
        "is_nonobtuse": rep.is_nonobtuse,
        "h_max": f"{rep.h_max:.17g}",
        "h_min": f"{rep.h_min:.17g}",
    }
    with open(out / "quality.txt", "w", encoding="utf-8") as fh:
        for hl in header:
            fh.write(f"# {hl}\n")
        for k, v in lines.items():
            fh.write(f"{k}: {v}\n")
    for k, v in lines.items():
        print(f"{k}: {v}")
    return EXIT_OK


def _manufactured_data(cfg, bundle, lam):
    exact = compile_expression(cfg.get_str("exact"))
    grad_x = compile_expression(cfg.get_str("exact_grad_x"))
    grad_y = compile_expression(cfg.get_str("exact_grad_y"))
    lap = compile_expression(cfg.get_str("exact_laplacian"))
    beta_vals = bundle.beta.values

    def f(x, y):
        return lam * exact(x, y) - lap(x, y)

    def g(x, y, edge):
        return (grad_x(x, y) * edge.normal[0] + grad_y(x, y) * edge.normal[1]
                + (lam + beta_vals[edge.index]) * exact(x, y))

    return f, g, exact, lambda x, y: (grad_x(x, y), grad_y(x, y))


def cmd_solve(cfg):
    mesh = build_mesh(cfg)
    beta = build_beta(cfg, mesh)
    bundle = assemble(mesh, beta, lumped=cfg.get_bool("lumped", False))
    omega0 = cfg.get_float("omega0", choose_omega0(beta))
    lam = cfg.get_float("lambda", omega0)
    if lam < omega0 - 1e-12:
        raise ConfigError(f"lambda = {lam} is below omega0 = {omega0}")

    manufactured = cfg.has("exact")
    if manufactured:
        f, g, exact, exact_grad = _manufactured_data(cfg, bundle, lam)
    else:
        f_raw = cfg.get_str("f", "0")
        g_raw = cfg.get_str("g", "0")
        f = compile_expression(f_raw)
        g_plain = compile_expression(g_raw)
        g = lambda x, y, edge: g_plain(x, y)

    state = robin_solve(bundle, lam, f=f, g=g, omega0=omega0)
    out = out_dir(cfg)
    header = cfg.header_pairs()
    extra = [("derived.omega0", f"{omega0:.17g}")]
    if manufactured:
        l2, h1 = integration_errors(mesh, state.values, exact, exact_grad)
        extra += [("derived.l2_error", f"{l2:.17g}"),
                  ("derived.h1_error", f"{h1:.17g}")]
        print(f"l2_error: {l2:.6e}")
        print(f"h1_error: {h1:.6e}")
    write_state_csv(out / "solution.csv", mesh, state.values,
                    header_pairs=header + extra)
    heatmap.render_heatmap(mesh, state.values, out / "solution.ppm",
                           header_lines=[f"{k} = {v}" for k, v in header])
    print(f"sup_norm: {bundle.sup_norm(state.values):.6e}")
    return EXIT_OK


def cmd_evolve(cfg):
    mesh = build_mesh(cfg)
    beta = build_beta(cfg, mesh)
    bundle = assemble(mesh, beta, lumped=cfg.get_bool("lumped", False))
    omega0 = cfg.get_float("omega0", choose_omega0(beta))
    op = WentzellOperator.from_bundle(bundle, omega0=omega0)
    initial = build_initial(cfg, bundle)
    t_final = cfg.get_float("t_final", 0.0)
    dt = cfg.get_float("dt", 0.01)
    scheme = cfg.get_str("scheme", "implicit-euler")
    frame_stride = cfg.get_int("frame_stride", 0)

    try:
        traj = evolve(op, initial, t_final, dt, scheme=scheme)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = out_dir(cfg)
    header = cfg.header_pairs()
    traj.write_csv(out / "trajectory.csv", header_pairs=header)
    write_state_csv(out / "state_final.csv", mesh, traj.states[-1].values,
                    header_pairs=header)

    vmax = max(float(np.abs(s.values).max()) for s in traj.states)
    frame_ids = {0, len(traj.states) - 1}
    if frame_stride and frame_stride > 0:
        frame_ids.update(range(0, len(traj.states), frame_stride))
    hdr = [f"{k} = {v}" for k, v in header]
    for i in sorted(frame_ids):
        rgb = heatmap.rasterize(mesh, traj.states[i].values, vmax=vmax)
        heatmap.write_ppm(out / f"frame_{i:06d}.ppm", rgb, header_lines=hdr)
    if not traj.completed:
        print(f"evolution aborted: {traj.failure}", file=sys.stderr)
        return EXIT_NUMERICAL
    drift = np.abs(traj.observables["mass"] - traj.observables["mass"][0])
    print(f"steps: {len(traj.times) - 1}")
    print(f"final_sup_norm: {traj.observables['sup_norm'][-1]:.6e}")
    print(f"max_mass_drift: {drift.max():.6e}")
    return EXIT_OK


def _verify_suites(cfg, mesh):
    seed = cfg.get_int("seed", 0)
    n_samples = cfg.get_int("n_samples", 20)
    quality = quality_report(mesh)

    def suite_neumann():
        rep = checks.neumann_checks(mesh, n_samples=n_samples, seed=seed)
        yield ("neumann.equilibrium", rep.equilibrium_error <= 1e-10,
               f"error {rep.equilibrium_error:.3e}")
        yield ("neumann.positivity", rep.positivity_min >= -1e-12,
               f"min {rep.positivity_min:.3e}")
        yield ("neumann.sup_ratio", rep.sup_ratio_max <= 1.0 + 1e-10,
               f"max ratio {rep.sup_ratio_max:.12f}")

    def suite_contractivity():
        beta = build_beta(cfg, mesh)
        bundle = assemble(mesh, beta, lumped=True)
        op = WentzellOperator.from_bundle(bundle)
        rep = checks.sup_resolvent_bound(op, [1.0, 10.0, 100.0], n_samples,
                                         seed=seed)
        if not quality.is_nonobtuse:
            # maximum principle hypothesis absent: report, do not judge
            yield ("contractivity.sup_ratio", None,
                   f"not applicable (obtuse mesh, max ratio "
                   f"{rep.max_ratio:.6f}, defect "
                   f"{max(rep.max_ratio - 1.0, 0.0):.3e})")
            return
        yield ("contractivity.sup_ratio", rep.max_ratio <= 1.0 + 5e-3,
               f"max ratio {rep.max_ratio:.12f}")

    def suite_sector():
        beta = build_beta(cfg, mesh)
        bundle = assemble(mesh, beta, lumped=cfg.get_bool("lumped", False))
        op = WentzellOperator.from_bundle(bundle)
        est = semigroup.sector_estimate(op, op.omega0, max(n_samples, 100),
                                        seed=seed)
        if beta.is_real():
            yield ("sector.real_beta", est.theta <= 1e-9,
                   f"theta {est.theta:.3e}")
        else:
            yield ("sector.half_angle", est.theta < np.pi / 2 - 1e-6,
                   f"theta {est.theta:.6f}")

    def suite_projection():
        beta = build_beta(cfg, mesh)
        bundle = assemble(mesh, beta, lumped=True)
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(max(n_samples, 50)):
            u = 2.5 * (rng.standard_normal(bundle.n_total)
                       + 1j * rng.standard_normal(bundle.n_total))
            rep = checks.check_projection_inequality(bundle, u)
            worst = min(worst, rep.shifted_value / rep.scale)
        if not quality.is_nonobtuse:
            yield ("projection.inequality", None,
                   f"not applicable (obtuse mesh, worst {worst:.3e})")
            return
        yield ("projection.inequality", worst >= -1e-10,
               f"worst normalized value {worst:.3e}")

    def suite_conservation():
        bundle = assemble(mesh, beta=0.0, lumped=False)
        op = WentzellOperator.from_bundle(bundle)
        rng = np.random.default_rng(seed)
        initial = bundle.random_state(rng)
        traj = evolve(op, initial, 1.0, 0.01, keep_states=False)
        mass = traj.observables["mass"]
        drift = float(np.abs(mass - mass[0]).max() / abs(mass[0]))
        yield ("conservation.mass_drift", drift <= 1e-10,
               f"relative drift {drift:.3e}")

    return {
        "neumann": suite_neumann,
        "contractivity": suite_contractivity,
        "sector": suite_sector,
        "projection": suite_projection,
        "conservation": suite_conservation,
    }


def cmd_verify(cfg):
    mesh = build_mesh(cfg)
    suites = _verify_suites(cfg, mesh)
    selector = cfg.get_str("suite", "all")
    if selector == "all":
        selected = list(suites)
    elif selector in suites:
        selected = [selector]
    else:
        raise ConfigError(f"unknown suite '{selector}'; "
                          f"choose from {sorted(suites)} or 'all'")
    results = []
    for name in selected:
        results.extend(suites[name]())
    out = out_dir(cfg)
    lines = []
    n_fail = 0
    for name, ok, detail in results:
        status = "NA" if ok is None else ("PASS" if ok else "FAIL")
        if ok is False:
            n_fail += 1
        lines.append(f"{name}: {status} ({detail})")
    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        for key, val in cfg.header_pairs():
            fh.write(f"# {key} = {val}\n")
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_FINDING if n_fail else EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="wentzell-lab",
        description="Finite-element laboratory for the Laplacian with "
                    "Wentzell (dynamic) boundary conditions.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
            ("mesh", "generate or ingest a mesh and report its quality"),
            ("solve", "solve the Robin boundary-value problem"),
            ("evolve", "march the boundary-coupled heat semigroup"),
            ("verify", "run verification suites")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable, later wins)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="random seed")

    args = parser.parse_args(argv)
    commands = {"mesh": cmd_mesh, "solve": cmd_solve,
                "evolve": cmd_evolve, "verify": cmd_verify}
    try:
        cfg = Config.load(args.config, args.set)
        if args.out is not None:
            cfg.data["out"] = args.out
        if args.seed is not None:
            cfg.data["seed"] = str(args.seed)
        return commands[args.command](cfg)
    except (ConfigError, ExpressionError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularMatrixError, RuntimeError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
