"""Problem construction and I/O.

* the synthetic benchmark family ``H[mu](s) = C (s I - mu A1 - A0)^{-1} B``
  with 2x2 blocks, and its closed-form transfer function;
* Matrix Market reading and writing (coordinate and array, real);
* problem configuration files (TOML, JSON or YAML);
* JSON/CSV serialization of minimization results.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sps

from .errors import ConfigError, MatrixMarketError
from .model import (AffineMatrixFamily, Constant, Coordinate, Monomial, ParameterBox,
                    ParametricDescriptorSystem)

__all__ = [
    "SyntheticSpec",
    "ProblemSpec",
    "synthetic_build",
    "synthetic_oracle_transfer",
    "load_matrix_market",
    "write_matrix_market",
    "parse_coefficient",
    "load_problem_config",
    "problem_from_dict",
    "save_result",
    "load_result",
    "RESULT_FORMAT_VERSION",
    "SYNTHETIC_REFERENCE",
]

RESULT_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# synthetic family


@dataclass(frozen=True)
class SyntheticSpec:
    """Block-diagonal SISO family of even order ``n``.

    Block ``i`` has ``A1_i = a_i I_2``, ``A0_i = [[0, b_i], [-b_i, 0]]``,
    ``B_i = [2, 0]^T`` and ``C_i = [1, 0]``.  ``a`` runs from -10 down to
    -1000 and ``b`` from 10 up to 1000, both equidistant with endpoints, so
    the most lightly damped pair sits at the lowest frequency.  With
    ``ascending_a=True`` the damping grid runs from -1000 up to -10 instead,
    pairing the heaviest damping with the lowest frequency.
    """

    n: int
    lower: float = 0.02
    upper: float = 1.0
    ascending_a: bool = False

    def __post_init__(self):
        if self.n % 2 or self.n < 4:
            raise ValueError(f"synthetic order must be even and >= 4, got {self.n}")

    @property
    def blocks(self):
        return self.n // 2

    @property
    def a(self):
        if self.ascending_a:
            return np.linspace(-1000.0, -10.0, self.blocks)
        return np.linspace(-10.0, -1000.0, self.blocks)

    @property
    def b(self):
        return np.linspace(10.0, 1000.0, self.blocks)

    @property
    def box(self):
        return ParameterBox([self.lower], [self.upper])

    @property
    def omega_max(self):
        return 2.0 * float(np.max(np.abs(self.b)))


def synthetic_build(n, **kwargs):
    spec = n if isinstance(n, SyntheticSpec) else SyntheticSpec(int(n), **kwargs)
    q = spec.blocks
    a, b = spec.a, spec.b
    idx = np.arange(q)
    r0, r1 = 2 * idx, 2 * idx + 1
    A1 = sps.diags(np.repeat(a, 2)).tocsc()
    A0 = sps.csc_matrix((np.concatenate([b, -b]),
                         (np.concatenate([r0, r1]), np.concatenate([r1, r0]))),
                        shape=(spec.n, spec.n))
    E = sps.identity(spec.n, format="csc")
    B = np.zeros((spec.n, 1))
    B[r0, 0] = 2.0
    C = np.zeros((1, spec.n))
    C[0, r0] = 1.0
    system = ParametricDescriptorSystem(
        AffineMatrixFamily([(Constant(1.0), E)]),
        AffineMatrixFamily([(Coordinate(0), A1), (Constant(1.0), A0)]),
        AffineMatrixFamily([(Constant(1.0), B)]),
        AffineMatrixFamily([(Constant(1.0), C)]),
        spec.box,
        name=f"synthetic-{spec.n}",
    )
    system.synthetic = spec
    return system


def synthetic_oracle_transfer(spec, mu, omega):
    """``sum_i 2 (i w - mu a_i) / ((i w - mu a_i)^2 + b_i^2)``; vectorized in ``omega``."""
    if not isinstance(spec, SyntheticSpec):
        spec = SyntheticSpec(int(spec))
    mu = float(np.asarray(mu).ravel()[0])
    w = np.asarray(omega, dtype=float)
    z = 1j * w[..., None] - mu * spec.a
    return np.sum(2.0 * z / (z * z + spec.b ** 2), axis=-1)


# ---------------------------------------------------------------------------
# Matrix Market


_MM_FIELDS = {"real", "integer", "pattern", "double"}
_MM_SYMMETRY = {"general", "symmetric", "skew-symmetric"}


def load_matrix_market(path):
    """Read a real Matrix Market file as a CSC matrix (array format too).

    Symmetric and skew-symmetric storage is expanded; indices are 1-based
    in the file.
    """
    path = Path(path)
    try:
        fh = open(path, "r")
    except OSError as exc:
        raise MatrixMarketError(f"cannot open: {exc.strerror}", path) from None
    with fh:
        header = fh.readline()
        tokens = header.strip().split()
        if len(tokens) != 5 or tokens[0].lower() != "%%matrixmarket":
            raise MatrixMarketError("missing or malformed %%MatrixMarket header", path, 1)
        obj, fmt, fld, sym = (t.lower() for t in tokens[1:])
        if obj != "matrix":
            raise MatrixMarketError(f"unsupported object {obj!r}", path, 1)
        if fmt not in ("coordinate", "array"):
            raise MatrixMarketError(f"unsupported format {fmt!r}", path, 1)
        if fld not in _MM_FIELDS:
            raise MatrixMarketError(f"unsupported field {fld!r} (real data only)", path, 1)
        if sym not in _MM_SYMMETRY:
            raise MatrixMarketError(f"unsupported symmetry {sym!r}", path, 1)
        if fmt == "array" and fld == "pattern":
            raise MatrixMarketError("pattern field requires coordinate format", path, 1)

        lineno = 1
        size = None
        for line in fh:
            lineno += 1
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            size = s.split()
            break
        if size is None:
            raise MatrixMarketError("missing size line", path, lineno)
        try:
            dims = [int(t) for t in size]
        except ValueError:
            raise MatrixMarketError(f"bad size line {line.strip()!r}", path, lineno) from None
        want = 3 if fmt == "coordinate" else 2
        if len(dims) != want or any(v < 0 for v in dims):
            raise MatrixMarketError(f"bad size line {line.strip()!r}", path, lineno)
        rows, cols = dims[0], dims[1]
        if sym != "general" and rows != cols:
            raise MatrixMarketError(f"{sym} matrix must be square", path, lineno)

        if fmt == "coordinate":
            nnz = dims[2]
            I = np.empty(nnz, dtype=np.int64)
            J = np.empty(nnz, dtype=np.int64)
            X = np.ones(nnz)
            count = 0
            per = 2 if fld == "pattern" else 3
            for line in fh:
                lineno += 1
                s = line.strip()
                if not s or s.startswith("%"):
                    continue
                parts = s.split()
                if len(parts) != per:
                    raise MatrixMarketError(
                        f"expected {per} values per entry, got {len(parts)}", path, lineno)
                if count >= nnz:
                    raise MatrixMarketError(f"more than the declared {nnz} entries", path, lineno)
                try:
                    i, j = int(parts[0]), int(parts[1])
                    if per == 3:
                        X[count] = float(parts[2])
                except ValueError:
                    raise MatrixMarketError(f"unparsable entry {s!r}", path, lineno) from None
                if not (1 <= i <= rows and 1 <= j <= cols):
                    raise MatrixMarketError(
                        f"index ({i}, {j}) outside {rows}x{cols}", path, lineno)
                I[count], J[count] = i - 1, j - 1
                count += 1
            if count != nnz:
                raise MatrixMarketError(f"expected {nnz} entries, found {count}", path, lineno)
        else:
            if sym == "general":
                positions = [(i, j) for j in range(cols) for i in range(rows)]
            elif sym == "symmetric":
                positions = [(i, j) for j in range(cols) for i in range(j, rows)]
            else:
                positions = [(i, j) for j in range(cols) for i in range(j + 1, rows)]
            vals = []
            for line in fh:
                lineno += 1
                s = line.strip()
                if not s or s.startswith("%"):
                    continue
                for t in s.split():
                    try:
                        vals.append(float(t))
                    except ValueError:
                        raise MatrixMarketError(f"unparsable value {t!r}", path, lineno) from None
                if len(vals) > len(positions):
                    raise MatrixMarketError(
                        f"more than the expected {len(positions)} values", path, lineno)
            if len(vals) != len(positions):
                raise MatrixMarketError(
                    f"expected {len(positions)} values, found {len(vals)}", path, lineno)
            I = np.array([p[0] for p in positions], dtype=np.int64)
            J = np.array([p[1] for p in positions], dtype=np.int64)
            X = np.array(vals, dtype=float)

    if sym != "general":
        off = I != J
        sign = -1.0 if sym == "skew-symmetric" else 1.0
        I, J, X = (np.concatenate([I, J[off]]), np.concatenate([J, I[off]]),
                   np.concatenate([X, sign * X[off]]))
    return sps.csc_matrix((X, (I, J)), shape=(rows, cols))


def write_matrix_market(path, M, comment=None):
    """Write ``M`` in coordinate format with round-trip float precision."""
    M = sps.coo_matrix(M)
    if np.iscomplexobj(M.data):
        raise ValueError("only real matrices can be written")
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{M.shape[0]} {M.shape[1]} {M.nnz}\n")
        for i, j, v in zip(M.row, M.col, M.data):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


# ---------------------------------------------------------------------------
# problem configuration


_FACTOR = re.compile(r"^mu(\d+)(?:\^(\d+))?$")


def parse_coefficient(desc, d):
    """Coefficient from a config descriptor.

    Accepted: a number; a string product such as ``"1"``, ``"mu2"``,
    ``"-mu1"``, ``"0.5*mu1*mu3^2"`` (``mu`` indices are 1-based); or a
    table ``{constant = c}``, ``{coordinate = j}``,
    ``{monomial = [e1, ..., ed], scale = s}``.
    """
    if isinstance(desc, bool):
        raise ValueError(f"bad coefficient {desc!r}")
    if isinstance(desc, (int, float)):
        return Constant(float(desc))
    if isinstance(desc, dict):
        if "constant" in desc:
            return Constant(float(desc["constant"]))
        if "coordinate" in desc:
            j = int(desc["coordinate"])
            if not 1 <= j <= d:
                raise ValueError(f"coordinate {j} outside 1..{d}")
            return Coordinate(j - 1)
        if "monomial" in desc:
            exps = [int(e) for e in desc["monomial"]]
            if len(exps) != d:
                raise ValueError(f"monomial needs {d} exponents, got {len(exps)}")
            return Monomial(tuple(exps), float(desc.get("scale", 1.0)))
        raise ValueError(f"unknown coefficient table {desc!r}")
    if not isinstance(desc, str):
        raise ValueError(f"bad coefficient {desc!r}")
    s = desc.replace(" ", "")
    if not s:
        raise ValueError("empty coefficient")
    scale = 1.0
    if s[0] in "+-":
        scale = -1.0 if s[0] == "-" else 1.0
        s = s[1:]
    exps = [0] * d
    any_mu = False
    for factor in s.split("*"):
        m = _FACTOR.match(factor)
        if m:
            j = int(m.group(1))
            if not 1 <= j <= d:
                raise ValueError(f"{factor!r}: parameter index outside 1..{d}")
            exps[j - 1] += int(m.group(2) or 1)
            any_mu = True
            continue
        try:
            scale *= float(factor)
        except ValueError:
            raise ValueError(f"bad coefficient factor {factor!r} in {desc!r}") from None
    if not any_mu:
        return Constant(scale)
    if scale == 1.0 and sum(exps) == 1:
        return Coordinate(exps.index(1))
    return Monomial(tuple(exps), scale)


@dataclass
class ProblemSpec:
    name: str
    kind: str
    box: ParameterBox
    omega_max: float
    terms: dict = field(default_factory=dict)
    n: int = None
    m: int = None
    p: int = None
    source: str = None
    synthetic: SyntheticSpec = None
    options: dict = field(default_factory=dict)


def _read_config_file(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        if suffix in (".yaml", ".yml"):
            import yaml
            with open(path) as fh:
                return yaml.safe_load(fh)
        with open(path) as fh:
            return json.load(fh)
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"{path}: cannot parse config ({exc})") from None


def load_problem_config(path, data_dir=None):
    """Load a problem config; returns ``(ProblemSpec, ParametricDescriptorSystem)``.

    Matrix files are resolved against ``data_dir`` when given, otherwise
    against the config's own ``data_dir`` key taken relative to the config
    file.  All validation failures are collected into one
    :class:`ConfigError`.
    """
    raw = _read_config_file(path)
    if data_dir is None:
        data_dir = Path(path).parent / str(raw.get("data_dir", "."))
    return problem_from_dict(raw, base_dir=data_dir, source=str(path))


_FAMILIES = ("E", "A", "B", "C")


def problem_from_dict(raw, base_dir=".", source=None):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table/object at top level")
    problems = []
    kind = str(raw.get("type", "matrices")).lower()
    name = str(raw.get("name", kind))
    options = dict(raw.get("options", {}))

    if kind == "synthetic":
        def bound(key, default):
            v = raw.get("box", {}).get(key, default)
            return float(v[0] if isinstance(v, list) else v)

        try:
            spec = SyntheticSpec(int(raw["n"]), bound("lower", 0.02), bound("upper", 1.0),
                                 ascending_a=bool(raw.get("ascending_a", False)))
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(f"synthetic config: {exc}") from None
        system = synthetic_build(spec)
        omega_max = float(raw.get("omega_max", spec.omega_max))
        ps = ProblemSpec(name, kind, spec.box, omega_max, n=spec.n, m=1, p=1,
                         source=source, synthetic=spec, options=options)
        return ps, system

    if kind != "matrices":
        raise ConfigError(f"unknown problem type {kind!r}")

    box_raw = raw.get("box")
    box = None
    if not isinstance(box_raw, dict) or "lower" not in box_raw or "upper" not in box_raw:
        problems.append("box: needs 'lower' and 'upper' lists")
    else:
        try:
            box = ParameterBox(box_raw["lower"], box_raw["upper"])
        except (TypeError, ValueError) as exc:
            problems.append(f"box: {exc}")
    omega_max = raw.get("omega_max")
    try:
        omega_max = float(omega_max)
        if not omega_max > 0:
            raise ValueError
    except (TypeError, ValueError):
        problems.append("omega_max: required positive number")
        omega_max = None
    d = box.d if box is not None else 0

    families = {}
    term_desc = {}
    base_dir = Path(base_dir)
    for fam in _FAMILIES:
        entries = raw.get(fam)
        if entries is None:
            problems.append(f"{fam}: missing term list")
            continue
        if isinstance(entries, (dict, str)):
            entries = [entries]
        terms = []
        term_desc[fam] = []
        for t, entry in enumerate(entries):
            label = f"{fam}[{t}]"
            if isinstance(entry, str):
                entry = {"file": entry}
            fname = entry.get("file") if isinstance(entry, dict) else None
            if not fname:
                problems.append(f"{label}: missing 'file'")
                continue
            fpath = Path(fname)
            if not fpath.is_absolute():
                fpath = base_dir / fpath
            coef = None
            if box is not None:
                try:
                    coef = parse_coefficient(entry.get("coefficient", 1.0), d)
                except ValueError as exc:
                    problems.append(f"{label}: {exc}")
            if not fpath.exists():
                problems.append(f"{label}: file not found: {fpath}")
                continue
            try:
                M = load_matrix_market(fpath)
            except MatrixMarketError as exc:
                problems.append(f"{label}: {exc}")
                continue
            if entry.get("transpose"):
                M = M.T.tocsc()
            if "scale" in entry:
                M = float(entry["scale"]) * M
            if fam in ("B", "C"):
                M = M.toarray()
            if coef is not None:
                terms.append((coef, M))
                term_desc[fam].append({"file": str(fpath), "coefficient": coef.describe()})
        if terms:
            families[fam] = terms

    system = None
    if not problems:
        try:
            fams = []
            for fam in _FAMILIES:
                fams.append(AffineMatrixFamily(families[fam]))
            system = ParametricDescriptorSystem(
                *fams, box, name=name,
                dense_crossover=int(options.get("dense_crossover", 500)))
        except ValueError as exc:
            problems.append(f"dimensions: {exc}")
    if problems:
        raise ConfigError(problems)
    ps = ProblemSpec(name, kind, box, omega_max, term_desc, system.n, system.m, system.p,
                     source=source, options=options)
    return ps, system


# ---------------------------------------------------------------------------
# results


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if isinstance(x, np.integer):
        return int(x)
    return x


def _unjson_float(x):
    if isinstance(x, str):
        return float(x)
    return x


def _result_to_dict(result):
    def point(pt):
        return {"mu": _jsonable(pt.mu), "omega": _jsonable(pt.omega), "kind": pt.kind,
                "iteration": pt.iteration, "full_norm": _jsonable(pt.full_norm)}

    return {
        "format_version": RESULT_FORMAT_VERSION,
        "problem": result.problem,
        "algorithm": result.algorithm,
        "optimizer": result.optimizer,
        "mu_star": _jsonable(result.mu_star),
        "omega_star": _jsonable(result.omega_star),
        "norm_star": _jsonable(result.norm_star),
        "termination_reason": result.termination_reason,
        "iterations": result.iterations,
        "wall_time": _jsonable(result.wall_time),
        "initial_dim": result.initial_dim,
        "history": [
            {
                "k": rec.k,
                "mu": _jsonable(rec.mu),
                "omega": _jsonable(rec.omega),
                "full_norm": _jsonable(rec.full_norm),
                "reduced_norm": _jsonable(rec.reduced_norm),
                "subspace_dim": rec.subspace_dim,
                "wall_time": _jsonable(rec.wall_time),
                "extra_points": [point(p) for p in rec.extra_points],
            }
            for rec in result.history
        ],
        "expansion_points": [point(p) for p in result.expansion_points],
    }


def save_result(result, path, format=None):
    """Write a :class:`~hinfmin.driver.MinimizationResult` as JSON or CSV.

    CSV has one row per greedy iteration with columns ``k, mu_1..mu_d,
    omega, reduced_norm, full_norm, subspace_dim, wall_time``.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".") or "json").lower()
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(_result_to_dict(result), fh, indent=2)
            fh.write("\n")
        return
    if fmt != "csv":
        raise ValueError(f"unknown result format {fmt!r}")
    d = len(np.atleast_1d(result.mu_star)) if result.mu_star is not None else 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", *[f"mu_{j + 1}" for j in range(d)], "omega", "reduced_norm",
                    "full_norm", "subspace_dim", "wall_time"])
        for rec in result.history:
            w.writerow([rec.k, *[repr(float(v)) for v in np.atleast_1d(rec.mu)],
                        repr(float(rec.omega)), repr(float(rec.reduced_norm)),
                        repr(float(rec.full_norm)), rec.subspace_dim,
                        f"{rec.wall_time:.6f}"])


def load_result(path):
    """Inverse of :func:`save_result` for the JSON format."""
    from .driver import ExpansionPoint, IterationRecord, MinimizationResult

    with open(path) as fh:
        raw = json.load(fh)
    if raw.get("format_version") != RESULT_FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported result format {raw.get('format_version')!r}")

    def point(p):
        return ExpansionPoint(np.asarray(p["mu"], dtype=float), _unjson_float(p["omega"]),
                              p["kind"], p["iteration"], _unjson_float(p["full_norm"]))

    history = [
        IterationRecord(
            k=h["k"], mu=np.asarray(h["mu"], dtype=float), omega=_unjson_float(h["omega"]),
            full_norm=_unjson_float(h["full_norm"]),
            reduced_norm=_unjson_float(h["reduced_norm"]),
            subspace_dim=h["subspace_dim"], wall_time=h["wall_time"],
            extra_points=[point(p) for p in h["extra_points"]])
        for h in raw["history"]
    ]
    mu_star = raw["mu_star"]
    return MinimizationResult(
        mu_star=None if mu_star is None else np.asarray(mu_star, dtype=float),
        omega_star=_unjson_float(raw["omega_star"]),
        norm_star=_unjson_float(raw["norm_star"]),
        history=history,
        termination_reason=raw["termination_reason"],
        expansion_points=[point(p) for p in raw["expansion_points"]],
        algorithm=raw.get("algorithm"),
        optimizer=raw.get("optimizer"),
        problem=raw.get("problem"),
        iterations=raw.get("iterations", len(history)),
        wall_time=raw.get("wall_time", 0.0),
        initial_dim=raw.get("initial_dim", 0),
    )


# reference optima of the synthetic family, n -> (mu*, norm*)
SYNTHETIC_REFERENCE = {
    100: (1.000000, 0.317092),
    200: (1.000000, 0.549800),
    400: (0.270587, 0.969289),
    600: (0.212279, 1.337220),
    800: (0.181492, 1.706940),
    1000: (0.157222, 2.08316),
    2000: (0.115748, 4.08243),
    5000: (0.113064, 10.1718),
    10000: (0.112964, 20.3321),
    20000: (0.113009, 40.6554),
    50000: (0.113066, 101.628),
    100000: (0.113090, 203.248),
}
