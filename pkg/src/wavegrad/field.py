"""Box domains, cell-centered grids, the analytic test-function catalog and
field ingestion (CSV fields, PGM images)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

MAX_DIM = 3


class FieldError(ValueError):
    """Raised for malformed geometry, inputs, or files."""


def _as_vector(x, d: int | None = None, name: str = "value") -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise FieldError(f"{name} must be a vector, got shape {v.shape}")
    if d is not None and v.size != d:
        raise FieldError(f"{name} has {v.size} entries, expected {d}")
    return v


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box prod_i [lo_i, hi_i]."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(a) for a in np.atleast_1d(self.lo))
        hi = tuple(float(b) for b in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise FieldError("lo and hi differ in dimension")
        if not 1 <= len(lo) <= MAX_DIM:
            raise FieldError(f"dimension must be in 1..{MAX_DIM}, got {len(lo)}")
        if not all(math.isfinite(a) and math.isfinite(b) and b > a for a, b in zip(lo, hi)):
            raise FieldError(f"need finite hi > lo on every axis, got lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def widths(self) -> np.ndarray:
        return np.subtract(self.hi, self.lo)

    def measure(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, x, margin: float = 0.0) -> bool:
        """True if x lies inside the box shrunk by `margin` on every side."""
        x = _as_vector(x, self.d, "x")
        return bool(np.all(x > np.add(self.lo, margin)) and np.all(x < np.subtract(self.hi, margin)))


@dataclass(frozen=True)
class GridSpec:
    n: tuple[int, ...]
    domain: BoxDomain

    def __post_init__(self):
        n = tuple(int(k) for k in np.atleast_1d(self.n))
        if len(n) != self.domain.d:
            raise FieldError(f"grid has {len(n)} axes but domain has {self.domain.d}")
        if any(k < 1 for k in n):
            raise FieldError(f"need at least one sample per axis, got {n}")
        object.__setattr__(self, "n", n)

    @property
    def d(self) -> int:
        return len(self.n)

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    def spacing(self) -> np.ndarray:
        return self.domain.widths / np.asarray(self.n, dtype=float)

    def axis_coords(self) -> list[np.ndarray]:
        """Cell-center coordinates lo + (k + 1/2) dx per axis."""
        dx = self.spacing()
        return [lo + (np.arange(k) + 0.5) * h for lo, k, h in zip(self.domain.lo, self.n, dx)]

    def points(self) -> np.ndarray:
        """All cell centers as an (N, d) array in row-major order."""
        mesh = np.meshgrid(*self.axis_coords(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Samples of S at the cell centers of `grid`, shaped like grid.n."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.size != self.grid.size:
            raise FieldError(f"field has {v.size} values, grid expects {self.grid.size}")
        if not np.all(np.isfinite(v)):
            raise FieldError("field contains non-finite values")
        v = v.reshape(self.grid.n)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def domain(self) -> BoxDomain:
        return self.grid.domain

    @property
    def d(self) -> int:
        return self.grid.d


@dataclass(frozen=True)
class TestFunction:
    """Analytic S with gradient and Hessian, plus its natural domain.

    ``grad_bound`` is max |grad S|_inf over the domain. ``periodic`` marks
    functions sampled over whole periods, whose domain is really a torus.
    """

    __test__ = False  # not a pytest class

    name: str
    d: int
    eval: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    grad_bound: float
    domain: BoxDomain
    params: dict = dc_field(default_factory=dict)
    periodic: bool = False

    def grad_many(self, x: np.ndarray) -> np.ndarray:
        """Gradients at an (M, d) array of points, vectorized where possible."""
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        vec = _VECTOR_GRADS.get(self.name)
        if vec is not None:
            return vec(self, x)
        return np.array([self.grad(p) for p in x])

    def hess_many(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        vec = _VECTOR_HESS.get(self.name)
        if vec is not None:
            return vec(self, x)
        return np.array([self.hess(p) for p in x]).reshape(-1, self.d, self.d)

    def eval_many(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        vec = _VECTOR_EVALS.get(self.name)
        if vec is not None:
            return vec(self, x)
        return np.array([self.eval(p) for p in x])


def _quadratic(name: str, A: np.ndarray, domain: BoxDomain) -> TestFunction:
    A = np.asarray(A, dtype=float)
    if A.shape[0] != A.shape[1] or not np.allclose(A, A.T):
        raise FieldError("quadratic form matrix must be square and symmetric")
    if np.any(np.linalg.eigvalsh(A) <= 0):
        raise FieldError("quadratic form matrix must be positive definite")
    # |A x|_inf is maximized at a corner of the box
    corners = np.array(np.meshgrid(*zip(domain.lo, domain.hi), indexing="ij")).reshape(A.shape[0], -1).T
    bound = float(np.max(np.abs(corners @ A)))

    def _x(x):
        return np.atleast_1d(np.asarray(x, float))

    return TestFunction(
        name=name,
        d=A.shape[0],
        eval=lambda x: 0.5 * float(_x(x) @ A @ _x(x)),
        grad=lambda x: A @ _x(x),
        hess=lambda x: A.copy(),
        grad_bound=bound,
        domain=domain,
        params={"A": A.tolist()},
    )


def catalog(name: str, A: Sequence[Sequence[float]] | None = None) -> TestFunction:
    """Return a catalog test function by name.

    ``quadratic2d`` takes an optional symmetric positive-definite ``A``
    (default ``[[2, 0], [0, 1]]``).
    """
    two_pi = 2.0 * math.pi
    if name == "quadratic1d":
        return _quadratic(name, np.eye(1), BoxDomain((-1.0,), (1.0,)))
    if name == "quadratic2d":
        A = np.array([[2.0, 0.0], [0.0, 1.0]]) if A is None else np.asarray(A, dtype=float)
        if A.shape != (2, 2):
            raise FieldError("quadratic2d needs a 2x2 matrix")
        return _quadratic(name, A, BoxDomain((-1.0, -1.0), (1.0, 1.0)))
    if name == "quadratic3d":
        return _quadratic(name, np.eye(3), BoxDomain((-1.0,) * 3, (1.0,) * 3))
    if name == "cosine1d":
        return TestFunction(
            name=name,
            d=1,
            eval=lambda x: math.cos(float(np.ravel(x)[0])),
            grad=lambda x: np.array([-math.sin(float(np.ravel(x)[0]))]),
            hess=lambda x: np.array([[-math.cos(float(np.ravel(x)[0]))]]),
            grad_bound=1.0,
            domain=BoxDomain((0.0,), (two_pi,)),
            periodic=True,
        )
    if name == "doublewell1d":
        def _x(x):
            return float(np.ravel(x)[0])

        return TestFunction(
            name=name,
            d=1,
            eval=lambda x: _x(x) ** 4 / 4.0 - _x(x) ** 2 / 2.0,
            grad=lambda x: np.array([_x(x) ** 3 - _x(x)]),
            hess=lambda x: np.array([[3.0 * _x(x) ** 2 - 1.0]]),
            grad_bound=6.0,  # |x^3 - x| at x = +-2
            domain=BoxDomain((-2.0,), (2.0,)),
        )
    if name == "sinusoid2d":
        def _grad(x):
            x = np.asarray(x, float)
            return -np.sin(x)

        return TestFunction(
            name=name,
            d=2,
            eval=lambda x: float(np.sum(np.cos(np.asarray(x, float)))),
            grad=_grad,
            hess=lambda x: np.diag(-np.cos(np.asarray(x, float))),
            grad_bound=1.0,
            domain=BoxDomain((0.0, 0.0), (two_pi, two_pi)),
            periodic=True,
        )
    raise FieldError(f"unknown test function {name!r}; choose from {sorted(CATALOG_NAMES)}")


CATALOG_NAMES = ("quadratic1d", "cosine1d", "doublewell1d", "quadratic2d", "sinusoid2d", "quadratic3d")


def _quad_grad_many(f, x):
    return x @ np.asarray(f.params["A"])


def _quad_eval_many(f, x):
    A = np.asarray(f.params["A"])
    return 0.5 * np.einsum("mi,ij,mj->m", x, A, x)


_VECTOR_GRADS = {
    "quadratic1d": _quad_grad_many,
    "quadratic2d": _quad_grad_many,
    "quadratic3d": _quad_grad_many,
    "cosine1d": lambda f, x: -np.sin(x),
    "sinusoid2d": lambda f, x: -np.sin(x),
    "doublewell1d": lambda f, x: x**3 - x,
}

def _diag_hess(values: np.ndarray) -> np.ndarray:
    m, d = values.shape
    out = np.zeros((m, d, d))
    out[:, np.arange(d), np.arange(d)] = values
    return out


_VECTOR_HESS = {
    "quadratic1d": lambda f, x: np.broadcast_to(np.asarray(f.params["A"]), (len(x), 1, 1)).copy(),
    "quadratic2d": lambda f, x: np.broadcast_to(np.asarray(f.params["A"]), (len(x), 2, 2)).copy(),
    "quadratic3d": lambda f, x: np.broadcast_to(np.asarray(f.params["A"]), (len(x), 3, 3)).copy(),
    "cosine1d": lambda f, x: _diag_hess(-np.cos(x)),
    "sinusoid2d": lambda f, x: _diag_hess(-np.cos(x)),
    "doublewell1d": lambda f, x: _diag_hess(3.0 * x**2 - 1.0),
}

_VECTOR_EVALS = {
    "quadratic1d": _quad_eval_many,
    "quadratic2d": _quad_eval_many,
    "quadratic3d": _quad_eval_many,
    "cosine1d": lambda f, x: np.cos(x[:, 0]),
    "sinusoid2d": lambda f, x: np.cos(x).sum(axis=1),
    "doublewell1d": lambda f, x: x[:, 0] ** 4 / 4.0 - x[:, 0] ** 2 / 2.0,
}


def make_grid(n: int | Sequence[int], domain: BoxDomain) -> GridSpec:
    """Grid with `n` samples per axis (a scalar n is broadcast)."""
    if np.ndim(n) == 0:
        n = (int(n),) * domain.d
    return GridSpec(tuple(n), domain)


def sample_field(f: TestFunction, domain: BoxDomain | None = None, grid: GridSpec | int | Sequence[int] | None = None) -> ScalarField:
    """Evaluate f at every cell center of the grid."""
    domain = f.domain if domain is None else domain
    if f.d != domain.d:
        raise FieldError(f"function {f.name} is {f.d}-D but domain is {domain.d}-D")
    if grid is None:
        raise FieldError("a grid (or sample count) is required")
    if not isinstance(grid, GridSpec):
        grid = make_grid(grid, domain)
    if grid.domain != domain:
        raise FieldError("grid was built for a different domain")
    values = f.eval_many(grid.points())
    if not np.all(np.isfinite(values)):
        raise FieldError(f"{f.name} produced non-finite values on the grid")
    return ScalarField(grid, values)


def constant_field(value: float, grid: GridSpec) -> ScalarField:
    return ScalarField(grid, np.full(grid.n, float(value)))


def finite_difference_check(f: TestFunction, n_points: int = 100, rel_step: float = 1e-4, seed: int = 0) -> tuple[float, float]:
    """Max relative error of f.grad vs central differences of f.eval, and of
    f.hess vs central differences of f.grad, at random interior points."""
    rng = np.random.default_rng(seed)
    dom = f.domain
    w = dom.widths
    h = rel_step * w
    pts = np.asarray(dom.lo) + w * (0.05 + 0.9 * rng.random((n_points, f.d)))
    grad_err = hess_err = 0.0
    for x in pts:
        g = np.asarray(f.grad(x), float)
        H = np.asarray(f.hess(x), float)
        g_fd = np.empty(f.d)
        H_fd = np.empty((f.d, f.d))
        for i in range(f.d):
            e = np.zeros(f.d)
            e[i] = h[i]
            g_fd[i] = (f.eval(x + e) - f.eval(x - e)) / (2 * h[i])
            H_fd[:, i] = (np.asarray(f.grad(x + e)) - np.asarray(f.grad(x - e))) / (2 * h[i])
        gscale = max(1.0, float(np.max(np.abs(g))))
        hscale = max(1.0, float(np.max(np.abs(H))))
        grad_err = max(grad_err, float(np.max(np.abs(g - g_fd))) / gscale)
        hess_err = max(hess_err, float(np.max(np.abs(H - H_fd))) / hscale)
    return grad_err, hess_err


# ---------------------------------------------------------------- CSV fields

def _fmt_vec(v) -> str:
    return ",".join(repr(float(a)) for a in v)


def save_field_csv(field: ScalarField, path: str | Path) -> None:
    """Write a field: a `# d=.. lo=.. hi=.. n=..` header then one value per line.

    Values are written with repr() so the round trip is bit-exact.
    """
    dom = field.domain
    header = f"# d={field.d} lo={_fmt_vec(dom.lo)} hi={_fmt_vec(dom.hi)} n={','.join(str(k) for k in field.grid.n)}"
    body = "\n".join(repr(float(v)) for v in field.values.ravel())
    Path(path).write_text(header + "\n" + body + "\n")


def _parse_header(line: str) -> dict[str, str]:
    if not line.startswith("#"):
        raise FieldError("field CSV must start with a '# d=... lo=... hi=... n=...' header")
    parts = {}
    for tok in line[1:].split():
        if "=" not in tok:
            raise FieldError(f"malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        parts[k.strip()] = v.strip()
    missing = {"d", "lo", "hi", "n"} - parts.keys()
    if missing:
        raise FieldError(f"header missing {sorted(missing)}")
    return parts


def load_field_csv(path: str | Path) -> ScalarField:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise FieldError(f"{path} is empty")
    hdr = _parse_header(lines[0])
    try:
        d = int(hdr["d"])
        lo = [float(a) for a in hdr["lo"].split(",")]
        hi = [float(b) for b in hdr["hi"].split(",")]
        n = [int(k) for k in hdr["n"].split(",")]
    except ValueError as exc:
        raise FieldError(f"malformed header: {exc}") from None
    if not (len(lo) == len(hi) == len(n) == d):
        raise FieldError(f"header declares d={d} but lists {len(lo)}/{len(hi)}/{len(n)} entries")
    grid = GridSpec(tuple(n), BoxDomain(tuple(lo), tuple(hi)))
    body = [ln.split(",")[0].strip() for ln in lines[1:] if ln.strip() and not ln.startswith("#")]
    if len(body) != grid.size:
        raise FieldError(f"count mismatch: header implies {grid.size} values, file has {len(body)}")
    try:
        values = np.array([float(s) for s in body])
    except ValueError as exc:
        raise FieldError(f"bad value: {exc}") from None
    if not np.all(np.isfinite(values)):
        raise FieldError("non-finite entry in field file")
    return ScalarField(grid, values)


# ---------------------------------------------------------------- PGM images

def _pgm_tokens(data: bytes, count: int, pos: int) -> tuple[list[bytes], int]:
    """Read `count` whitespace-separated header tokens, skipping # comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FieldError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a P2 or P5 PGM into an (H, W) integer array."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise FieldError(f"unsupported PGM magic number {magic!r}")
    (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise FieldError("malformed PGM header") from None
    if w <= 0 or h <= 0 or not 0 < maxval <= 65535:
        raise FieldError(f"bad PGM geometry {w}x{h} maxval={maxval}")
    count = w * h
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        payload = data[pos : pos + need]
        if len(payload) < need:
            raise FieldError(f"truncated PGM payload: need {need} bytes, got {len(payload)}")
        pixels = np.frombuffer(payload, dtype=dtype).astype(np.int64)
    else:
        toks = data[pos:].split()
        if len(toks) < count:
            raise FieldError(f"truncated PGM payload: need {count} values, got {len(toks)}")
        pixels = np.array([int(t) for t in toks[:count]], dtype=np.int64)
    if pixels.max(initial=0) > maxval:
        raise FieldError("pixel value exceeds maxval")
    return pixels.reshape(h, w)


def write_pgm(path: str | Path, pixels: np.ndarray, maxval: int | None = None, binary: bool = True) -> None:
    pixels = np.asarray(pixels, dtype=np.int64)
    if pixels.ndim != 2 or pixels.min(initial=0) < 0:
        raise FieldError("PGM pixels must be a nonnegative 2-D array")
    h, w = pixels.shape
    maxval = int(pixels.max(initial=0)) if maxval is None else int(maxval)
    maxval = max(maxval, 1)
    if maxval > 65535:
        raise FieldError("maxval above 65535")
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + pixels.astype(dtype).tobytes())
    else:
        rows = "\n".join(" ".join(str(int(p)) for p in row) for row in pixels)
        Path(path).write_text(f"P2\n{w} {h}\n{maxval}\n{rows}\n")


def image_to_field(pixels: np.ndarray, intensity_scale: float = 1.0) -> ScalarField:
    """Map an (H, W) image to a 2-D field on [0, W] x [0, H] in pixel units.

    Axis 1 runs along columns, axis 2 along rows; image row 0 sits at the
    smallest x2.
    """
    pixels = np.asarray(pixels, dtype=float)
    h, w = pixels.shape
    grid = GridSpec((w, h), BoxDomain((0.0, 0.0), (float(w), float(h))))
    return ScalarField(grid, intensity_scale * pixels.T)


def load_image_pgm(path: str | Path, intensity_scale: float = 1.0) -> ScalarField:
    return image_to_field(read_pgm(path), intensity_scale)
