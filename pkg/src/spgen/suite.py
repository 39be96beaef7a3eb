"""Benchmark problem suite: a plain-text table of SpMM and 3x3-conv shapes."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import ConvProblem, SpmmProblem, sparse_random


@dataclass(frozen=True)
class ProblemSuiteEntry:
    name: str
    kind: str
    dims: tuple[int, ...]  # (M, K, N) for spmm, (H, W, C_in, C_out) for conv
    density: float
    count: int = 1

    def __post_init__(self):
        want = 3 if self.kind == "spmm" else 4 if self.kind == "conv" else None
        if want is None:
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")
        if len(self.dims) != want or min(self.dims) < 1:
            raise ValueError(f"{self.name}: bad dims {self.dims}")
        if not 0 < self.density <= 1:
            raise ValueError(f"{self.name}: density {self.density} not in (0, 1]")

    def virtual_dims(self) -> tuple[int, int, int]:
        if self.kind == "spmm":
            return self.dims
        h, w, cin, cout = self.dims
        return (cout, cin * 9, h * w)

    def problem(self, seed: int, density: float | None = None) -> SpmmProblem | ConvProblem:
        d = self.density if density is None else density
        if self.kind == "spmm":
            m, k, n = self.dims
            return SpmmProblem(m, k, n, sparse_random(m, k, d, seed))
        h, w, cin, cout = self.dims
        return ConvProblem(h, w, cin, cout, sparse_random(cout, cin * 9, d, seed))


def parse_suite(text: str) -> list[ProblemSuiteEntry]:
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            name, kind = tok[0], tok[1]
            ndims = 3 if kind == "spmm" else 4
            dims = tuple(int(t) for t in tok[2:2 + ndims])
            density = float(tok[2 + ndims])
            count = int(tok[3 + ndims]) if len(tok) > 3 + ndims else 1
            entries.append(ProblemSuiteEntry(name, kind, dims, density, count))
        except (IndexError, ValueError) as exc:
            raise ValueError(f"suite line {lineno}: {exc}") from exc
    return entries


def load_suite(path: str | Path | None = None) -> list[ProblemSuiteEntry]:
    """Read a suite file, or the bundled one when ``path`` is None."""
    if path is None:
        text = resources.files("spgen").joinpath("data/suite.txt").read_text()
    else:
        text = Path(path).read_text()
    return parse_suite(text)
