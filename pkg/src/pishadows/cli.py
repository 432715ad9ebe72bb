"""Command-line front-end: channel caches, datasets, estimates and the GHZ benchmark."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import channel as chan
from . import estimate as est
from . import sim
from .pibasis import (
    AxisString,
    GhzProjector,
    HammingProjector,
    PauliString,
    PIVector,
    RawPIVector,
    observable_label,
    observable_to_pivector,
    schur_layout,
)

CACHE_ENV = "PISHADOWS_CACHE_DIR"
DEFAULT_CACHE = ".pishadows-cache"
LARGE_N = 40
EXIT_OK, EXIT_CONFIG, EXIT_CACHE, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    n: int | None = None
    n_list: list = field(default_factory=list)
    protocol: str | None = "symm-pi"
    basis: str | None = None
    shots: int | None = None
    seed: int | None = None
    batches: int = est.DEFAULT_BATCHES
    observables: list = field(default_factory=list)
    state: str = "ghz"
    data: Path | None = None
    out: Path | None = None
    cache_dir: Path = Path(DEFAULT_CACHE)
    blocks: list | None = None
    method: str = "mom"
    svg: bool = False

    def echo(self) -> dict:
        out = {}
        for k, v in vars(self).items():
            out[k] = str(v) if isinstance(v, Path) else v
        return out


# spec parsing


def parse_observable(text: str, n: int | None):
    """Grammar: pauli:ZZI..., axis:Z:k, hamming:h, ghz-proj, pivec:<path>."""
    try:
        if text == "ghz-proj":
            return GhzProjector()
        kind, _, rest = text.partition(":")
        if kind == "pauli":
            spec = PauliString(rest)
            if n is not None and len(rest) != n:
                raise ConfigError(f"Pauli string {rest!r} has length {len(rest)}, expected {n}")
            return spec
        if kind == "axis":
            axis, _, k = rest.partition(":")
            return AxisString(axis, int(k))
        if kind == "hamming":
            return HammingProjector(int(rest))
        if kind == "pivec":
            return RawPIVector(load_pivector(rest))
    except (ValueError, OSError) as exc:
        raise ConfigError(f"bad observable spec {text!r}: {exc}") from exc
    raise ConfigError(f"unknown observable spec {text!r}")


def load_pivector(path) -> PIVector:
    """JSON {"basis", "n", "coeffs"} with complex entries written as [re, im] pairs."""
    doc = json.loads(Path(path).read_text())
    raw = np.array(doc["coeffs"], dtype=float)
    coeffs = raw[:, 0] + 1j * raw[:, 1] if raw.ndim == 2 else raw
    return PIVector(doc["basis"], int(doc["n"]), coeffs)


def save_pivector(vec: PIVector, path) -> None:
    c = np.asarray(vec.coeffs, dtype=complex)
    doc = {"basis": vec.basis, "n": vec.n, "coeffs": [[float(z.real), float(z.imag)] for z in c]}
    Path(path).write_text(json.dumps(doc) + "\n")


def parse_state(text: str, n: int | None):
    if text == "ghz":
        if n is None:
            raise ConfigError("--state ghz needs --n")
        return sim.GhzState(n)
    if text.startswith("file:"):
        try:
            vec = load_pivector(text[5:])
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read state file: {exc}") from exc
        if n is not None and vec.n != n:
            raise ConfigError(f"state file has n={vec.n}, --n is {n}")
        trace = _trace(vec)
        if abs(trace - 1) > 1e-9:
            raise ConfigError(f"state has trace {trace:.6g}, expected 1")
        return vec
    raise ConfigError(f"unknown state spec {text!r}")


def _trace(vec: PIVector) -> float:
    if vec.basis == "pauli":
        return float(np.real(vec.coeffs[0])) * 2 ** (vec.n / 2)
    layout = schur_layout(vec.n)
    return sum(math.sqrt(lam.dim) * float(np.real(np.trace(layout.block(vec.coeffs, p))))
               for p, lam in enumerate(layout.irreps))


def default_shots(n: int) -> int:
    return 100_000 if n <= LARGE_N else 10_000


def default_basis(n: int) -> str:
    return "pauli" if n <= 12 else "schur"


# caches


def channel_dir(cache_dir: Path, basis: str, n: int, blocks=None) -> Path:
    name = f"{basis}-n{n}"
    if blocks is not None:
        name += "-blocks" + "_".join(str(b) for b in sorted(blocks))
    return Path(cache_dir) / name


def obtain_channel(cfg: RunConfig, n: int, basis: str) -> tuple[chan.ChannelMatrix, str]:
    """Load the full channel from the cache, building and storing it if absent."""
    directory = channel_dir(cfg.cache_dir, basis, n)
    if (directory / "meta.json").exists():
        ch = chan.load_channel(directory, n=n, basis=basis)
    else:
        ch = _build(basis, n, None)
        chan.save_channel(ch, directory)
    return ch, _file_hash(directory / "meta.json")


def _build(basis: str, n: int, blocks):
    if basis == "pauli":
        if n > chan.PAULI_CAP:
            raise ConfigError(f"the Pauli basis is capped at n={chan.PAULI_CAP}; use --basis schur")
        if blocks is not None:
            raise ConfigError("--blocks selects Schur Delta blocks; use --basis schur")
        return chan.build_channel_pauli(n)
    return chan.build_channel_schur(n, blocks)


def _file_hash(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        tmp = out.with_name(out.name + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, out)


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# commands


def cmd_channel(cfg: RunConfig) -> dict:
    n = _need_n(cfg)
    basis = cfg.basis or default_basis(n)
    ch = _build(basis, n, cfg.blocks)
    directory = cfg.out or channel_dir(cfg.cache_dir, basis, n, cfg.blocks)
    meta = chan.save_channel(ch, directory)
    lo, hi = chan.extreme_eigenvalues(ch)
    summary = {
        "n": n, "basis": basis, "complete": ch.complete, "size": ch.size,
        "blocks": {str(b["key"]): b["size"] for b in meta["blocks"]},
        "min_eigenvalue": lo, "max_eigenvalue": hi,
        "expected_min_eigenvalue": 1.0 / (2 * n + 1),
        "cache": str(directory), "meta_sha256": _file_hash(Path(directory) / "meta.json"),
    }
    sys.stdout.write(_json(summary))
    return summary


def cmd_sample(cfg: RunConfig) -> dict:
    n = _need_n(cfg)
    if cfg.seed is None:
        raise ConfigError("sampling needs --seed")
    if cfg.out is None:
        raise ConfigError("sampling needs --out")
    state = parse_state(cfg.state, n)
    shots = cfg.shots or default_shots(n)
    if cfg.protocol == "symm-pi":
        ds = sim.draw_dataset(state, shots, cfg.seed, n)
    elif cfg.protocol == "block":
        ds = sim.draw_block_dataset(state, shots, cfg.seed, n)
    else:
        if not isinstance(state, sim.GhzState):
            raise ConfigError("the LC protocol samples the GHZ state only")
        if n > sim.LC_CAP:
            raise ConfigError(f"the LC protocol is capped at n={sim.LC_CAP}")
        ds, _ = sim.simulate_lc_baseline(sim.ghz_statevector(n), [], shots, cfg.seed)
        ds.meta = {"state": "ghz"}
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    tmp = cfg.out.with_name(cfg.out.name + ".tmp")
    sim.write_dataset(ds, tmp)
    os.replace(tmp, cfg.out)
    summary = {"records": ds.size, "n": n, "protocol": cfg.protocol, "seed": cfg.seed,
               "out": str(cfg.out), "sha256": _file_hash(cfg.out)}
    sys.stdout.write(_json(summary))
    return summary


def _observable_vector(spec, n, basis):
    return spec.vector if isinstance(spec, RawPIVector) else observable_to_pivector(spec, n, basis)


def cmd_estimate(cfg: RunConfig) -> list:
    if cfg.data is None:
        raise ConfigError("estimate needs --data")
    try:
        ds = sim.read_dataset(cfg.data)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read dataset: {exc}") from exc
    if cfg.n is not None and cfg.n != ds.n:
        raise chan.CacheMismatch(f"dataset has n={ds.n}, --n is {cfg.n}")
    if cfg.protocol is not None and cfg.protocol != ds.protocol:
        raise chan.CacheMismatch(f"dataset protocol {ds.protocol!r} does not match --protocol {cfg.protocol!r}")
    specs = [parse_observable(o, ds.n) for o in cfg.observables] or [GhzProjector()]
    ch, ch_hash = (None, None)
    basis = "schur"
    if ds.protocol == "symm-pi":
        basis = cfg.basis or default_basis(ds.n)
        ch, ch_hash = obtain_channel(cfg, ds.n, basis)
    reports = []
    for spec in specs:
        if isinstance(spec, RawPIVector) and ds.protocol == "lc":
            raise ConfigError("the LC protocol cannot evaluate raw PI vectors")
        vec = _observable_vector(spec, ds.n, basis)
        obs = vec if isinstance(spec, RawPIVector) else spec
        bounds = est.applicable_bounds(spec, vec, ds.protocol)
        if cfg.method == "mean":
            rep = est.estimate_mean(ds, obs, ch, bounds=bounds)
        else:
            rep = est.estimate_median_of_means(ds, obs, ch, cfg.batches, bounds=bounds)
        rep.observable = observable_label(spec) if not isinstance(spec, RawPIVector) else "pivec"
        reports.append(rep)
    csv_text = est.reports_to_csv(reports)
    summary = {"config": cfg.echo(), "dataset_sha256": _file_hash(cfg.data), "channel_meta_sha256": ch_hash,
               "reports": [r.to_dict() for r in reports]}
    if cfg.out is None:
        sys.stdout.write(csv_text)
    else:
        _emit(csv_text, cfg.out)
        _emit(_json(summary), cfg.out.with_suffix(".json"))
    return reports


def cmd_variance(cfg: RunConfig) -> list:
    n = _need_n(cfg)
    state = parse_state(cfg.state, n)
    specs = [parse_observable(o, n) for o in cfg.observables] or [GhzProjector()]
    rows = []
    for spec in specs:
        method = "triple-sum" if n <= est.EXACT_CAP and (cfg.basis or "pauli") == "pauli" else "quadrature"
        if method == "triple-sum":
            ch, _ = obtain_channel(cfg, n, "pauli")
            obs = _observable_vector(spec, n, "pauli")
            value = est.exact_variance(obs, state, n, ch)
        else:
            ch, _ = obtain_channel(cfg, n, "schur")
            obs = _observable_vector(spec, n, "schur")
            value = est.exact_variance_quadrature(obs, state, n, ch)
        if value < -1e-9:
            raise FloatingPointError(f"negative exact variance {value}")
        bounds = est.applicable_bounds(spec, obs, "symm-pi")
        rows.append({"n": n, "observable": observable_label(spec), "method": method,
                     "exact_variance": value, "bound": bounds["symm-pi"]})
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["n", "observable", "method", "exact_variance", "bound"],
                            lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({**r, "exact_variance": est._fmt(r["exact_variance"]), "bound": est._fmt(r["bound"])})
    _emit(buf.getvalue(), cfg.out)
    return rows


BENCH_FIELDS = ("protocol", "observable", "n", "S", "estimate", "standard_error",
                "empirical_variance", "exact_variance", "exact_method", "bound")


def bench_observables(n: int) -> list:
    return [("Z1Z2", AxisString("Z", 2)), ("Z^(n/2)", AxisString("Z", n // 2)),
            ("Z^n", AxisString("Z", n)), ("GHZ projector", GhzProjector())]


def cmd_bench_ghz(cfg: RunConfig) -> dict:
    if not cfg.n_list:
        raise ConfigError("bench-ghz needs --n-list")
    if cfg.seed is None:
        raise ConfigError("bench-ghz needs --seed")
    protocols = ["symm-pi", "block", "lc"]
    rows = []
    for n in cfg.n_list:
        if n < 2:
            raise ConfigError("the GHZ benchmark needs n >= 2")
        shots = cfg.shots or default_shots(n)
        state = sim.GhzState(n)
        basis = default_basis(n)
        ch, _ = obtain_channel(cfg, n, basis)
        exact_ch = ch if basis == "pauli" or n > est.EXACT_CAP else obtain_channel(cfg, n, "pauli")[0]
        symm = sim.draw_dataset(state, shots, cfg.seed, n)
        block = sim.draw_block_dataset(state, shots, cfg.seed, n)
        lc_specs = [spec for _, spec in bench_observables(n)]
        lc_values = None
        if n <= sim.LC_CAP:
            _, lc_values = sim.simulate_lc_baseline(sim.ghz_statevector(n), lc_specs, shots, cfg.seed)
        for i, (name, spec) in enumerate(bench_observables(n)):
            if n <= est.EXACT_CAP:
                exact, how = est.exact_variance(spec, state, n, exact_ch), "triple-sum"
            else:
                exact, how = est.exact_variance_quadrature(spec, state, n, ch), "quadrature"
            for protocol in protocols:
                if protocol == "symm-pi":
                    values = est.shot_values(symm, spec, ch)
                    vec = observable_to_pivector(spec, n, basis)
                elif protocol == "block":
                    values = est.shot_values(block, spec)
                    vec = observable_to_pivector(spec, n, "schur")
                else:
                    if lc_values is None:
                        continue
                    values = lc_values[i]
                    vec = observable_to_pivector(spec, n, "schur")
                var = est.sample_variance(values)
                bound = min(est.applicable_bounds(spec, vec, protocol).values())
                rows.append({
                    "protocol": protocol, "observable": name, "n": n, "S": len(values),
                    "estimate": est.mean_estimate(values), "standard_error": math.sqrt(var / len(values)),
                    "empirical_variance": var,
                    "exact_variance": exact if protocol == "symm-pi" else "",
                    "exact_method": how if protocol == "symm-pi" else "", "bound": bound,
                })
    fits = {}
    for protocol in protocols:
        for name, _ in bench_observables(4):
            pts = [(r["n"], r["empirical_variance"]) for r in rows
                   if r["protocol"] == protocol and r["observable"] == name]
            if len(pts) >= 4 and all(v > 0 for _, v in pts):
                fit = est.scaling_fit(pts)
                fits[f"{protocol}/{name}"] = asdict(fit)
    out_dir = cfg.out or Path("bench-ghz")
    out_dir.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=BENCH_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (est._fmt(v) if isinstance(v, float) else v) for k, v in r.items()})
    _emit(buf.getvalue(), out_dir / "bench_ghz.csv")
    summary = {"config": cfg.echo(), "fits": fits, "rows": len(rows)}
    _emit(_json(summary), out_dir / "summary.json")
    if cfg.svg:
        _emit(render_svg(rows), out_dir / "bench_ghz.svg")
    sys.stdout.write(_json({"fits": fits, "out": str(out_dir)}))
    return summary


# dependency-free SVG chart of log variance against log n


_COLORS = ("#1b6ca8", "#d1495b", "#edae49", "#00798c", "#30638e", "#66a182", "#2e4057", "#8d96a3",
           "#a05195", "#f95d6a", "#665191", "#003f5c")


def render_svg(rows, width: int = 720, height: int = 480) -> str:
    series = {}
    for r in rows:
        if r["empirical_variance"] > 0:
            series.setdefault(f"{r['protocol']} {r['observable']}", []).append((r["n"], r["empirical_variance"]))
    if not series:
        return '<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10"/>\n'
    xs = [math.log10(n) for pts in series.values() for n, _ in pts]
    ys = [math.log10(v) for pts in series.values() for _, v in pts]
    x0, x1 = min(xs), max(xs) + 1e-9
    y0, y1 = min(ys), max(ys) + 1e-9
    pad_l, pad_r, pad_t, pad_b = 60, 200, 20, 40

    def px(x):
        return pad_l + (x - x0) / (x1 - x0) * (width - pad_l - pad_r)

    def py(y):
        return height - pad_b - (y - y0) / (y1 - y0) * (height - pad_t - pad_b)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad_l}" y1="{height - pad_b}" x2="{width - pad_r}" y2="{height - pad_b}" stroke="black"/>',
             f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{height - pad_b}" stroke="black"/>',
             f'<text x="{(width - pad_r + pad_l) / 2:.1f}" y="{height - 8}" text-anchor="middle">log10 n</text>',
             f'<text x="14" y="{height / 2:.1f}" transform="rotate(-90 14 {height / 2:.1f})" text-anchor="middle">log10 variance</text>']
    for i, (label, pts) in enumerate(sorted(series.items())):
        color = _COLORS[i % len(_COLORS)]
        coords = " ".join(f"{px(math.log10(n)):.1f},{py(math.log10(v)):.1f}" for n, v in sorted(pts))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = pad_t + 14 * i + 10
        parts.append(f'<line x1="{width - pad_r + 10}" y1="{ly}" x2="{width - pad_r + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{width - pad_r + 35}" y="{ly + 4}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# argument handling


def _need_n(cfg: RunConfig) -> int:
    if cfg.n is None:
        raise ConfigError(f"{cfg.command} needs --n")
    if cfg.n < 1:
        raise ConfigError("--n must be positive")
    return cfg.n


def _int_list(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


OBS_HELP = "pauli:STR, axis:P:K, hamming:H, ghz-proj or pivec:PATH; repeatable"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pishadows", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--n", type=int, help="number of qubits")
        p.add_argument("--basis", choices=["pauli", "schur"], help="coefficient basis (default pauli for n <= 12)")
        p.add_argument("--cache-dir", type=Path, help=f"channel cache directory (or ${CACHE_ENV})")
        p.add_argument("--out", type=Path, help="output file or directory")
        return p

    p = common(sub.add_parser("channel", help="build and cache the measurement channel"))
    p.add_argument("--blocks", type=_int_list, help="comma-separated Schur Delta blocks")

    p = common(sub.add_parser("sample", help="generate a dataset"))
    p.add_argument("--state", default="ghz", help="ghz or file:PATH to a saved state vector")
    p.add_argument("--protocol", choices=sim.PROTOCOLS, default="symm-pi")
    p.add_argument("--shots", type=int, help="number of measurement records")
    p.add_argument("--seed", type=int, help="integer seed (required)")

    p = common(sub.add_parser("estimate", help="estimate observables from a dataset"))
    p.add_argument("--data", type=Path, required=True, help="dataset written by sample")
    p.add_argument("--protocol", choices=sim.PROTOCOLS, help="expected protocol of the dataset")
    p.add_argument("--obs", action="append", default=[], help=OBS_HELP)
    p.add_argument("--batches", type=int, default=est.DEFAULT_BATCHES, help="median-of-means batch count")
    p.add_argument("--method", choices=["mom", "mean"], default="mom", help="median of means or plain mean")

    p = common(sub.add_parser("variance", help="exact single-shot variance"))
    p.add_argument("--state", default="ghz", help="ghz or file:PATH to a saved state vector")
    p.add_argument("--obs", action="append", default=[], help=OBS_HELP)

    p = common(sub.add_parser("bench-ghz", help="GHZ variance-scaling benchmark"))
    p.add_argument("--n-list", type=_int_list, required=True, help="comma-separated qubit counts")
    p.add_argument("--shots", type=int, help="number of measurement records")
    p.add_argument("--seed", type=int, help="integer seed (required)")
    p.add_argument("--svg", action="store_true", help="also write an SVG plot")
    return parser


def config_from_args(args) -> RunConfig:
    cache = args.cache_dir or Path(os.environ.get(CACHE_ENV, DEFAULT_CACHE))
    cfg = RunConfig(command=args.command, n=args.n, basis=args.basis, out=args.out,
                    cache_dir=Path(cache).resolve())
    for name in ("protocol", "shots", "seed", "batches", "state", "data", "method", "svg", "blocks"):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    cfg.observables = list(getattr(args, "obs", []) or [])
    cfg.n_list = list(getattr(args, "n_list", []) or [])
    if cfg.out is not None:
        cfg.out = cfg.out.resolve()
    if cfg.data is not None:
        cfg.data = cfg.data.resolve()
    if cfg.shots is not None and cfg.shots < 1:
        raise ConfigError("--shots must be positive")
    if cfg.batches < 1:
        raise ConfigError("--batches must be positive")
    return cfg


COMMANDS = {"channel": cmd_channel, "sample": cmd_sample, "estimate": cmd_estimate,
            "variance": cmd_variance, "bench-ghz": cmd_bench_ghz}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        COMMANDS[cfg.command](cfg)
    except (ConfigError, est.EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (chan.CacheMismatch, chan.UnbuiltBlock) as exc:
        print(f"cache error: {exc}", file=sys.stderr)
        return EXIT_CACHE
    except (sim.SamplingError, np.linalg.LinAlgError, FloatingPointError, chan.ChannelError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
