"""Command-line front end.

Every command reads an optional JSON config (``schema_version: 1``), applies
command-line overrides (flags > file > defaults) and writes JSON or
RFC-4180 CSV. The exit status is 0 only if every internal cross-check passes.
"""

import argparse
import csv
import io
import json
import logging
import math
import platform
import secrets
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .cloner import PHASES, clone_fidelity, universal_clone_fidelity
from .jointmeas import fourier_mub, measurement_settings, phase_cycle, joint_prob, quasi_dist_direct
from .photonics import (
    DelayScan,
    PhotonSpectrum,
    delay_scan_quasiprob,
    distinguishability,
    fit_hom_dip,
    hom_dip,
    quasi_dist_from_counts,
    qwp_state,
    run_experiment,
    spectral_width_from_bandwidth,
)
from .qmath import (
    InvalidStateError,
    density_matrix,
    is_density_matrix,
    ket,
    projector,
    random_density_matrix,
    random_ket,
)
from .tomography import (
    PhaseReferenceError,
    density_from_dist,
    fidelity,
    mle_fit,
    wavefunction_from_dist,
)

log = logging.getLogger("qtwins")

SCHEMA_VERSION = 1
COMMANDS = ("reconstruct", "delay-scan", "wp-scan", "hom-dip", "fidelity-bench")

_S = 1 / math.sqrt(2)
PRESETS = {
    "h": [1, 0],
    "v": [0, 1],
    "d": [_S, _S],
    "a": [_S, -_S],
    "r": [1j * _S, _S],
    "l": [-1j * _S, _S],
}


class ConfigError(ValueError):
    """The configuration cannot be used."""


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    dimension: int = 2
    input_state: object = "h"
    mean_counts: float = 1e4
    seed: object = None
    visibility: float = 1.0
    delta_omega: float = 1.0
    delta_lambda_nm: object = None
    center_nm: float = 808.0
    tau: float = 0.0
    tau_range: object = field(default_factory=lambda: {"start": -4.0, "stop": 4.0, "num": 81})
    sampling: bool = True
    x_index: int = 0
    y_index: int = 0
    x0: int = 0
    thetas_deg: list = field(default_factory=lambda: [10.0 * k for k in range(18)])
    dims: list = field(default_factory=lambda: list(range(2, 9)))
    trials: int = 100

    @classmethod
    def from_sources(cls, document=None, overrides=None):
        values = {}
        known = {f.name for f in fields(cls)}
        for source in (document or {}), (overrides or {}):
            unknown = set(source) - known
            if unknown:
                raise ConfigError(f"unknown config fields: {sorted(unknown)}")
            values.update({k: v for k, v in source.items() if v is not None})
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version!r}")
        if int(self.dimension) < 2:
            raise ConfigError("dimension must be at least 2")
        if not self.mean_counts > 0:
            raise ConfigError("mean_counts must be positive")
        if not 0 <= self.visibility <= 1:
            raise ConfigError("visibility must lie in [0, 1]")
        if not self.delta_omega > 0:
            raise ConfigError("delta_omega must be positive")
        d = int(self.dimension)
        for name in ("x_index", "y_index", "x0"):
            if not 0 <= getattr(self, name) < d:
                raise ConfigError(f"{name} out of range for dimension {d}")
        if not self.thetas_deg:
            raise ConfigError("thetas_deg must be non-empty")
        if any(not 2 <= int(k) <= 8 for k in self.dims):
            raise ConfigError("dims must lie in 2..8")
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        self.taus()

    def spectrum(self):
        if self.delta_lambda_nm is not None:
            return PhotonSpectrum(spectral_width_from_bandwidth(self.delta_lambda_nm, self.center_nm))
        return PhotonSpectrum(float(self.delta_omega))

    def taus(self):
        r = self.tau_range
        if isinstance(r, dict):
            try:
                num = int(r["num"])
                taus = np.linspace(float(r["start"]), float(r["stop"]), num)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad tau_range {r!r}") from exc
        else:
            taus = np.asarray(r, dtype=float)
        if taus.size == 0 or not np.all(np.isfinite(taus)):
            raise ConfigError("tau_range must give a non-empty list of finite delays")
        return [float(t) for t in taus]

    def state(self):
        return parse_state(self.input_state, int(self.dimension))


def _complex(v):
    if isinstance(v, dict):
        return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
    if isinstance(v, str):
        return complex(v.replace(" ", "").replace("i", "j"))
    return complex(v)


def parse_state(spec, d):
    """Density matrix from a preset name, ``qwp:<deg>``, amplitudes or matrix."""
    if isinstance(spec, str):
        name = spec.strip().lower()
        if name.startswith("qwp:"):
            if d != 2:
                raise ConfigError("qwp states require dimension 2")
            return projector(qwp_state(math.radians(float(name[4:]))))
        if name in PRESETS:
            if d != 2:
                raise ConfigError(f"preset {name!r} requires dimension 2")
            return projector(ket(PRESETS[name], normalize=True))
        raise ConfigError(f"unknown state preset {spec!r}")
    if isinstance(spec, dict) and "amplitudes" in spec:
        v = np.array([_complex(a) for a in spec["amplitudes"]])
        if v.size != d:
            raise ConfigError(f"expected {d} amplitudes, got {v.size}")
        n = np.linalg.norm(v)
        if n == 0:
            raise ConfigError("state amplitudes are all zero")
        if abs(n - 1) > 1e-6:
            log.warning("input state norm %.9g renormalized to 1", n)
        return projector(v / n)
    if isinstance(spec, dict) and "density" in spec:
        m = np.array([[_complex(a) for a in row] for row in spec["density"]])
        if m.shape != (d, d):
            raise ConfigError(f"density matrix must be {d}x{d}")
        m = (m + m.conj().T) / 2
        tr = np.trace(m).real
        if tr <= 0:
            raise ConfigError("density matrix has non-positive trace")
        if abs(tr - 1) > 1e-6:
            log.warning("density matrix trace %.9g renormalized to 1", tr)
        try:
            return density_matrix(m / tr)
        except InvalidStateError as exc:
            raise ConfigError(f"invalid density matrix: {exc}") from exc
    raise ConfigError(f"cannot interpret input_state {spec!r}")


# --------------------------------------------------------------------------- #
#                                 serialization                               #
# --------------------------------------------------------------------------- #


def cjson(z):
    z = complex(z)
    return {"re": z.real, "im": z.imag}


def cmatrix(m):
    return [[cjson(v) for v in row] for row in np.asarray(m)]


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


@dataclass
class Result:
    """Output of one command before formatting."""

    columns: list
    rows: list
    summary: dict
    document: dict
    checks: list = field(default_factory=list)

    def check(self, name, value, tol):
        ok = bool(value <= tol)
        self.checks.append({"name": name, "value": float(value), "tolerance": tol, "passed": ok})
        return ok

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks)


def render_csv(result):
    buf = io.StringIO()
    writer = csv.writer(buf)  # CRLF line endings per RFC 4180
    writer.writerow(result.columns)
    for row in result.rows:
        writer.writerow([fmt(v) for v in row])
    for key, value in result.summary.items():
        writer.writerow([f"# {key}={fmt(value)}"])
    for c in result.checks:
        writer.writerow([f"# check {c['name']}={'pass' if c['passed'] else 'FAIL'}"])
    return buf.getvalue()


def render_json(result, cfg, started, elapsed):
    doc = {
        "config": asdict(cfg),
        **result.document,
        "summary": result.summary,
        "rows": {"columns": result.columns, "data": result.rows},
        "cross_checks": result.checks,
        "runtime": {
            "version": __version__,
            "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
            "elapsed_s": elapsed,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }
    return json.dumps(doc, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, complex):
        return cjson(o)
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# --------------------------------------------------------------------------- #
#                                   commands                                  #
# --------------------------------------------------------------------------- #


def _coherent_weight(cfg):
    a2 = cfg.visibility * distinguishability(cfg.tau, cfg.spectrum())
    if a2 <= 1e-12:
        raise ConfigError("no two-photon coherence at this delay/visibility; nothing to reconstruct")
    return a2


def _rescale(dist, err_re, err_im, a2, sampling):
    # divide out the coherent weight; exact expected counts carry no error bar
    k = 1.0 / a2 if sampling else 0.0
    return dist / a2, err_re * k, err_im * k


def cmd_reconstruct(cfg):
    """Measure, phase-cycle and reconstruct one input state."""
    rho = cfg.state()
    d = rho.shape[0]
    mub = fourier_mub(d)
    a2 = _coherent_weight(cfg)
    records = run_experiment(
        rho,
        mub,
        cfg.mean_counts,
        seed=cfg.seed,
        visibility=cfg.visibility,
        tau=cfg.tau,
        spectrum=cfg.spectrum(),
        sampling=cfg.sampling,
    )
    dist, err_re, err_im = quasi_dist_from_counts(records, cfg.mean_counts, d)
    dist, err_re, err_im = _rescale(dist, err_re, err_im, a2, cfg.sampling)
    raw = density_from_dist(dist)
    mle = mle_fit(records, mub, alpha_sq=a2)

    result = Result(
        columns=["x", "y", "re", "im", "re_err", "im_err"],
        rows=[[x, y, dist[x, y].real, dist[x, y].imag, err_re[x, y], err_im[x, y]] for x in range(d) for y in range(d)],
        summary={},
        document={},
    )
    truth = quasi_dist_direct(rho, mub)
    if not cfg.sampling:
        result.check("quasi_vs_direct_trace", np.max(np.abs(dist - truth)), 1e-10)
        result.check("density_round_trip", np.linalg.norm(raw - rho), 1e-10)
    result.check("oracle_round_trip", np.linalg.norm(density_from_dist(truth) - rho), 1e-10)

    try:
        wf = wavefunction_from_dist(dist, cfg.x0, mub)
        wf_doc = {
            "x0": wf.reference_row,
            "nu": wf.norm_constant,
            "amplitudes": [cjson(a) for a in wf.amplitudes],
        }
        f_wf = fidelity(wf.amplitudes, rho).value
    except PhaseReferenceError as exc:
        print(f"qtwins: {exc}", file=sys.stderr)
        wf_doc, f_wf = {"error": str(exc)}, None

    physical = is_density_matrix(raw)
    fids = {
        "wavefunction": f_wf,
        "density_raw": fidelity(rho, raw).value if physical else None,
        "density_mle": fidelity(rho, mle).value,
    }
    result.summary = {"coherent_weight": a2, "mle_fidelity": fids["density_mle"], "raw_physical": physical}
    result.document = {
        "quasi_distribution": cmatrix(dist),
        "quasi_distribution_error": {"re": err_re, "im": err_im},
        "wavefunction": wf_doc,
        "density_matrix": {"raw": cmatrix(raw), "raw_physical": physical, "mle": cmatrix(mle)},
        "fidelities": fids,
        "counts": [
            {"j": cjson(r.j), "x": r.x_index, "y": r.y_index, "counts": r.counts, "expected": r.expected}
            for r in records
        ],
    }
    return result


def cmd_delay_scan(cfg):
    """Quasiprobability ``<x y>`` versus delay, with the Gaussian theory curve."""
    rho = cfg.state()
    mub = fourier_mub(rho.shape[0])
    scan = DelayScan(taus=cfg.taus(), state=rho, mean_counts=cfg.mean_counts, seed=cfg.seed)
    points = delay_scan_quasiprob(
        scan, cfg.spectrum(), mub, cfg.x_index, cfg.y_index, cfg.visibility, sampling=cfg.sampling
    )
    rows = [
        [p.tau, p.estimate.real, p.estimate.imag, p.error.real, p.error.imag, p.theory.real, p.theory.imag]
        for p in points
    ]
    result = Result(
        columns=["tau", "re_est", "im_est", "re_err", "im_err", "re_theory", "im_theory"],
        rows=rows,
        summary={"seed": cfg.seed, "x_index": cfg.x_index, "y_index": cfg.y_index},
        document={},
    )
    if not cfg.sampling:
        result.check("gaussian_law", max(abs(p.estimate - p.theory) for p in points), 1e-12)
    return result


def cmd_wp_scan(cfg):
    """Wave function of wave-plate states, read off the reference row."""
    if int(cfg.dimension) != 2:
        raise ConfigError("wp-scan requires dimension 2")
    mub = fourier_mub(2)
    a2 = _coherent_weight(cfg)
    rng = np.random.default_rng(cfg.seed)
    rows, fids, worst = [], [], 0.0
    for deg in cfg.thetas_deg:
        th = math.radians(deg)
        psi = qwp_state(th)
        records = run_experiment(
            psi,
            mub,
            cfg.mean_counts,
            visibility=cfg.visibility,
            tau=cfg.tau,
            spectrum=cfg.spectrum(),
            sampling=cfg.sampling,
            rng=rng,
        )
        dist, err_re, err_im = quasi_dist_from_counts(records, cfg.mean_counts, 2)
        dist, err_re, err_im = _rescale(dist, err_re, err_im, a2, cfg.sampling)
        try:
            wf = wavefunction_from_dist(dist, 0, mub)
        except PhaseReferenceError as exc:
            print(f"qtwins: theta={deg}: {exc}", file=sys.stderr)
            alpha = beta = complex("nan")
            nu = float("nan")
        else:
            alpha, beta = wf.amplitudes
            nu = wf.norm_constant
        sc = math.sin(th) * math.cos(th)
        theory = math.sqrt(max(3 / 8 * math.cos(4 * th) + 5 / 8, 0)) + 1j * sc
        # nu is treated as exact in the error bars
        ea = (err_re[0, 0] / nu, err_im[0, 0] / nu)
        eb = (err_re[0, 1] / nu, err_im[0, 1] / nu)
        f = fidelity(psi, mle_fit(records, mub, alpha_sq=a2)).value
        fids.append(f)
        if not cfg.sampling:
            worst = max(worst, abs(alpha - theory), abs(abs(alpha) ** 2 - (math.cos(th) ** 4 + math.sin(th) ** 4)))
        rows.append(
            [
                deg,
                alpha.real,
                alpha.imag,
                abs(alpha) ** 2,
                abs(beta) ** 2,
                ea[0],
                ea[1],
                2 * math.hypot(alpha.real * ea[0], alpha.imag * ea[1]),
                2 * math.hypot(beta.real * eb[0], beta.imag * eb[1]),
                theory.real,
                theory.imag,
                f,
            ]
        )
    result = Result(
        columns=[
            "theta_deg",
            "re_alpha",
            "im_alpha",
            "abs_alpha_sq",
            "abs_beta_sq",
            "re_alpha_err",
            "im_alpha_err",
            "abs_alpha_sq_err",
            "abs_beta_sq_err",
            "re_alpha_theory",
            "im_alpha_theory",
            "mle_fidelity",
        ],
        rows=rows,
        summary={"seed": cfg.seed, "mean_mle_fidelity": float(np.mean(fids))},
        document={},
    )
    if not cfg.sampling:
        result.check("alpha_formula", worst, 1e-10)
    return result


def cmd_hom_dip(cfg):
    """Coincidence dip versus delay and its Gaussian fit."""
    taus = cfg.taus()
    spec = cfg.spectrum()
    records = hom_dip(taus, spec, cfg.visibility, cfg.mean_counts, seed=cfg.seed, sampling=cfg.sampling)
    rows = [[r.tau, r.expected, r.counts, r.error if cfg.sampling else 0.0] for r in records]
    fit = fit_hom_dip(taus, [r.counts for r in records])
    result = Result(
        columns=["tau", "expected", "sampled", "err"],
        rows=rows,
        summary={
            "seed": cfg.seed,
            "fitted_visibility": fit.visibility,
            "fitted_delta_omega": fit.delta_omega,
            "fitted_center": fit.center,
            "fitted_contrast": fit.contrast,
        },
        document={},
    )
    if not cfg.sampling:
        result.check("visibility_recovered", abs(fit.visibility - cfg.visibility), 0.005)
        result.check("width_recovered", abs(fit.delta_omega / spec.delta_omega - 1), 0.01)
    return result


def cmd_fidelity_bench(cfg):
    """Clone fidelity and reconstruction residuals across dimensions."""
    rng = np.random.default_rng(cfg.seed)
    rows = []
    result = Result(
        columns=[
            "d",
            "analytic_clone_fidelity",
            "measured_clone_fidelity",
            "max_fidelity_deviation",
            "phase_cycle_error",
            "round_trip_error",
            "settings",
        ],
        rows=rows,
        summary={"seed": cfg.seed, "trials": cfg.trials},
        document={},
    )
    for d in sorted({int(k) for k in cfg.dims}):
        analytic = universal_clone_fidelity(d)
        measured, dev, pc_err, rt_err = [], 0.0, 0.0, 0.0
        mub = fourier_mub(d)
        for _ in range(cfg.trials):
            psi = random_ket(d, rng)
            for mode in "ab":
                fa = clone_fidelity(psi, mode)
                measured.append(fa)
                dev = max(dev, abs(fa - analytic))
            rho = random_density_matrix(d, rng)
            direct = quasi_dist_direct(rho, mub)
            cycled = phase_cycle([joint_prob(rho, j, mub) for j in PHASES])
            pc_err = max(pc_err, float(np.max(np.abs(cycled - direct))))
            rt_err = max(rt_err, float(np.linalg.norm(density_from_dist(direct) - rho)))
        rows.append([d, analytic, float(np.mean(measured)), dev, pc_err, rt_err, measurement_settings(d)])
        result.check(f"clone_fidelity_d{d}", dev, 1e-12)
        result.check(f"phase_cycle_d{d}", pc_err, 1e-12)
        result.check(f"round_trip_d{d}", rt_err, 1e-10)
    return result


HANDLERS = {
    "reconstruct": (cmd_reconstruct, "json"),
    "delay-scan": (cmd_delay_scan, "csv"),
    "wp-scan": (cmd_wp_scan, "csv"),
    "hom-dip": (cmd_hom_dip, "csv"),
    "fidelity-bench": (cmd_fidelity_bench, "csv"),
}


# --------------------------------------------------------------------------- #
#                                    parsing                                  #
# --------------------------------------------------------------------------- #


def _tau_range(text):
    try:
        start, stop, num = text.split(":")
        return {"start": float(start), "stop": float(stop), "num": int(num)}
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected START:STOP:NUM") from exc


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _state_arg(text):
    text = text.strip()
    if text.startswith(("{", "[")):
        value = json.loads(text)
        return {"amplitudes": value} if isinstance(value, list) else value
    return text


def build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = common.add_argument_group("global options")
    g.add_argument("--config", metavar="PATH", help="JSON config file")
    g.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    g.add_argument("--seed", type=int, help="RNG seed (generated and echoed if omitted)")
    g.add_argument("--no-sampling", action="store_true", help="use exact expected counts")
    g.add_argument("--format", choices=("json", "csv"), help="output format")
    g.add_argument("-v", "--verbose", action="store_true")
    e = common.add_argument_group("experiment overrides")
    e.add_argument("--state", type=_state_arg, help="preset h/v/d/a/r/l, qwp:DEG, or JSON amplitudes")
    e.add_argument("--dimension", type=int)
    e.add_argument("--mean-counts", type=float)
    e.add_argument("--visibility", type=float)
    e.add_argument("--delta-omega", type=float)
    e.add_argument("--tau", type=float)
    e.add_argument("--tau-range", type=_tau_range, metavar="START:STOP:NUM")
    e.add_argument("--x-index", type=int)
    e.add_argument("--y-index", type=int)
    e.add_argument("--x0", type=int)
    e.add_argument("--thetas", type=_float_list, metavar="DEG,DEG,...")
    e.add_argument("--dims", type=_int_list, metavar="D,D,...")
    e.add_argument("--trials", type=int)

    parser = argparse.ArgumentParser(
        prog="qtwins", description="Joint measurements on optimal quantum clones.", parents=[common]
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HANDLERS[name][0].__doc__.splitlines()[0])
    return parser


_FLAG_FIELDS = {
    "state": "input_state",
    "dimension": "dimension",
    "mean_counts": "mean_counts",
    "visibility": "visibility",
    "delta_omega": "delta_omega",
    "tau": "tau",
    "tau_range": "tau_range",
    "x_index": "x_index",
    "y_index": "y_index",
    "x0": "x0",
    "thetas": "thetas_deg",
    "dims": "dims",
    "trials": "trials",
    "seed": "seed",
}


def load_config(args):
    document = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                document = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(document, dict):
            raise ConfigError("config must be a JSON object")
    overrides = {f: getattr(args, a) for a, f in _FLAG_FIELDS.items() if getattr(args, a, None) is not None}
    if getattr(args, "no_sampling", False):
        overrides["sampling"] = False
    try:
        cfg = ExperimentConfig.from_sources(document, overrides)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.seed is None:
        cfg.seed = secrets.randbits(32)
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="qtwins: %(levelname)s: %(message)s",
    )
    handler, default_format = HANDLERS[args.command]
    started = time.time()
    try:
        cfg = load_config(args)
        result = handler(cfg)
    except ConfigError as exc:
        print(f"qtwins: invalid config: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"qtwins: {exc}", file=sys.stderr)
        return 1
    fmt_name = getattr(args, "format", None) or default_format
    text = render_csv(result) if fmt_name == "csv" else render_json(result, cfg, started, time.time() - started)
    out = getattr(args, "out", None)
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for c in result.checks:
        if not c["passed"]:
            print(f"qtwins: cross-check {c['name']} failed: {c['value']:.3e} > {c['tolerance']:g}", file=sys.stderr)
    return 0 if result.passed else 3


if __name__ == "__main__":
    sys.exit(main())
