"""Stratified life tables: loading, validation, and background-hazard queries.

A life table is a dense grid of expected mortality rates (per person-year)
over 1-year age cells x 1-year calendar cells x categorical strata (e.g.
sex, deprivation).  Rates are piecewise constant within cells.  A patient
diagnosed at age A in year y traverses the table along the diagonal
(A + s, y + s), so cumulative-hazard increments are exact sums of
rate x duration over the sub-segments delimited by integer age/year
boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import (
    DuplicateCell,
    MalformedRow,
    MissingCell,
    NegativeRate,
    UnknownStratum,
    ZeroHazardPath,
)

__all__ = [
    "LexisPosition",
    "LifeTable",
    "load_life_table",
]


@dataclass(frozen=True)
class LexisPosition:
    """A point on the Lexis plane plus the strata used for table lookup.

    As follow-up time s advances, age and year advance together to
    (age + s, year + s).
    """

    age: float
    year: float
    strata: tuple[str, ...] = ()


def _norm_strata(values: Iterable) -> tuple[str, ...]:
    return tuple(str(v).strip() for v in values)


@dataclass
class LifeTable:
    """Dense grid of background mortality rates h_P(age, year; strata).

    Internal storage is a dense array indexed by
    (age - age_min, year - year_min, stratum index) so that lookups in the
    likelihood inner loop are O(1).  Queries outside the age/year ranges
    clamp to the nearest boundary cell.  Immutable after construction;
    all queries are pure.
    """

    strata_columns: tuple[str, ...]
    age_min: int
    age_max: int
    year_min: int
    year_max: int
    rates: np.ndarray  # shape (n_ages, n_years, n_strata)
    strata_index: dict[tuple[str, ...], int] = field(repr=False)

    def __post_init__(self):
        self.rates.setflags(write=False)

    @property
    def n_cells(self) -> int:
        return self.rates.size

    def stratum_of(self, strata: Iterable) -> int:
        key = _norm_strata(strata)
        try:
            return self.strata_index[key]
        except KeyError:
            raise UnknownStratum(
                f"strata value {key!r} not present in life table "
                f"(columns {list(self.strata_columns)})"
            ) from None

    def _clamp_age(self, age: float) -> int:
        return min(max(int(math.floor(age)), self.age_min), self.age_max) - self.age_min

    def _clamp_year(self, year: float) -> int:
        return min(max(int(math.floor(year)), self.year_min), self.year_max) - self.year_min

    def rate_at(self, pos: LexisPosition) -> float:
        """Rate of the cell containing ``pos`` (clamped outside the range)."""
        k = self.stratum_of(pos.strata)
        return float(self.rates[self._clamp_age(pos.age), self._clamp_year(pos.year), k])

    def rate_at_offset(self, start: LexisPosition, s: float, advance_year: bool = True) -> float:
        """Rate seen at follow-up time s from ``start`` along the diagonal."""
        year = start.year + s if advance_year else start.year
        return self.rate_at(LexisPosition(start.age + s, year, start.strata))

    def cum_hazard_increment(
        self, start: LexisPosition, t: float, advance_year: bool = True
    ) -> float:
        """Exact integral of the rate along the diagonal from ``start`` over [0, t].

        Equals H_P(A+t, y+t; z) - H_P(A, y; z) under the piecewise-constant
        convention.  Breakpoints occur whenever floor(A+s) or floor(y+s)
        increments; each sub-segment contributes rate x duration.
        """
        if t < 0:
            raise ValueError(f"t must be >= 0, got {t}")
        k = self.stratum_of(start.strata)
        total = 0.0
        for dur, rate in self._segments(start.age, start.year, t, k, advance_year):
            total += rate * dur
        return total

    def _segments(self, age0, year0, t, stratum, advance_year):
        """Yield (duration, rate) pieces covering [0, t] along the diagonal.

        Breakpoint positions are derived from integer counters rather than
        accumulated floats, so segment boundaries are reproducible and free
        of drift.
        """
        if t <= 0.0:
            return
        base_a = math.floor(age0)
        base_y = math.floor(year0)
        ka = 1  # next age boundary is base_a + ka
        ky = 1
        s = 0.0
        while s < t:
            next_a = (base_a + ka) - age0
            next_y = (base_y + ky) - year0 if advance_year else math.inf
            s_next = min(next_a, next_y, t)
            if s_next <= s:
                # boundary coincides with current position; step the counter
                if next_a <= s:
                    ka += 1
                if advance_year and next_y <= s:
                    ky += 1
                continue
            mid = 0.5 * (s + s_next)
            ia = self._clamp_age(age0 + mid)
            iy = self._clamp_year(year0 + mid) if advance_year else self._clamp_year(year0)
            yield s_next - s, float(self.rates[ia, iy, stratum])
            if s_next == next_a:
                ka += 1
            if advance_year and s_next == next_y:
                ky += 1
            s = s_next

    def other_cause_time_inverse(
        self,
        start: LexisPosition,
        u: float,
        frailty: float = 1.0,
        advance_year: bool = True,
    ) -> float:
        """Invert the cumulative background hazard: find t with ΔH_P(t) = -log(u)/frailty.

        Walks the piecewise-constant segments; once both the age and year
        coordinates have clamped past the table edge the rate is constant and
        the remaining time is solved in closed form (extrapolation with the
        last cell's rate).

        Raises ZeroHazardPath when the target cannot be reached because the
        rate is zero from some point on.
        """
        if not 0.0 < u < 1.0:
            raise ValueError(f"u must be in (0, 1), got {u}")
        if frailty <= 0.0:
            raise ValueError(f"frailty must be > 0, got {frailty}")
        target = -math.log(u) / frailty
        if target == 0.0:
            return 0.0
        k = self.stratum_of(start.strata)
        base_a = math.floor(start.age)
        base_y = math.floor(start.year)
        ka = 1
        ky = 1
        s = 0.0
        acc = 0.0
        while True:
            ia = self._clamp_age(start.age + s)
            iy = self._clamp_year(start.year + s) if advance_year else self._clamp_year(start.year)
            rate = float(self.rates[ia, iy, k])
            clamped_a = start.age + s >= self.age_max + 1
            clamped_y = (not advance_year) or (start.year + s >= self.year_max + 1)
            if clamped_a and clamped_y:
                # constant rate forever: finish in closed form
                if rate <= 0.0:
                    raise ZeroHazardPath(
                        "cumulative hazard exhausted at "
                        f"{acc:.6g} < target {target:.6g} with zero tail rate"
                    )
                return s + (target - acc) / rate
            next_a = (base_a + ka) - start.age
            next_y = (base_y + ky) - start.year if advance_year else math.inf
            s_next = min(next_a, next_y)
            if s_next <= s:
                if next_a <= s:
                    ka += 1
                if advance_year and next_y <= s:
                    ky += 1
                continue
            dur = s_next - s
            if acc + rate * dur >= target:
                if rate <= 0.0:  # acc == target exactly, degenerate
                    return s
                return s + (target - acc) / rate
            acc += rate * dur
            if s_next == next_a:
                ka += 1
            if advance_year and s_next == next_y:
                ky += 1
            s = s_next


def load_life_table(
    source: TextIO | str,
    strata_columns: Sequence[str] | None = None,
) -> LifeTable:
    """Load and validate a life-table CSV.

    Expected header: ``age,year,<strata...>,rate`` with integer age/year,
    decimal rate per person-year, and ``#``-prefixed comment lines ignored.
    Strata columns are taken from ``strata_columns`` when given, otherwise
    inferred as every header column other than age, year, and rate.  Age and
    year ranges are inferred from the data; every cell inside those ranges
    must be present exactly once.
    """
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            return load_life_table(fh, strata_columns)

    lines = [
        (n, line.strip())
        for n, line in enumerate(source, start=1)
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not lines:
        raise MalformedRow("life table is empty")
    header_no, header = lines[0]
    cols = [c.strip() for c in header.split(",")]
    for required in ("age", "year", "rate"):
        if required not in cols:
            raise MalformedRow(f"header missing required column {required!r} (line {header_no})")
    if strata_columns is None:
        strata_cols = tuple(c for c in cols if c not in ("age", "year", "rate"))
    else:
        strata_cols = tuple(strata_columns)
        for c in strata_cols:
            if c not in cols:
                raise MalformedRow(f"declared strata column {c!r} not in header")
    idx_age = cols.index("age")
    idx_year = cols.index("year")
    idx_rate = cols.index("rate")
    idx_strata = [cols.index(c) for c in strata_cols]

    cells: dict[tuple[int, int, tuple[str, ...]], float] = {}
    for line_no, line in lines[1:]:
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != len(cols):
            raise MalformedRow(
                f"line {line_no}: expected {len(cols)} fields, got {len(parts)}"
            )
        try:
            age = int(parts[idx_age])
            year = int(parts[idx_year])
            rate = float(parts[idx_rate])
        except ValueError as exc:
            raise MalformedRow(f"line {line_no}: {exc}") from None
        if not math.isfinite(rate) or rate < 0.0:
            raise NegativeRate(f"line {line_no}: rate {parts[idx_rate]} is negative or not finite")
        key = (age, year, _norm_strata(parts[i] for i in idx_strata))
        if key in cells:
            raise DuplicateCell(f"line {line_no}: duplicate cell {key}")
        cells[key] = rate

    if not cells:
        raise MalformedRow("life table has a header but no data rows")

    ages = sorted({k[0] for k in cells})
    years = sorted({k[1] for k in cells})
    strata_values = sorted({k[2] for k in cells})
    age_min, age_max = ages[0], ages[-1]
    year_min, year_max = years[0], years[-1]
    n_a = age_max - age_min + 1
    n_y = year_max - year_min + 1
    strata_index = {s: i for i, s in enumerate(strata_values)}

    rates = np.full((n_a, n_y, len(strata_values)), np.nan)
    for (age, year, strata), rate in cells.items():
        rates[age - age_min, year - year_min, strata_index[strata]] = rate
    if np.isnan(rates).any():
        ia, iy, ik = np.argwhere(np.isnan(rates))[0]
        stratum = strata_values[ik]
        raise MissingCell(
            f"missing cell: age={age_min + ia}, year={year_min + iy}, strata={stratum}"
        )

    return LifeTable(
        strata_columns=strata_cols,
        age_min=age_min,
        age_max=age_max,
        year_min=year_min,
        year_max=year_max,
        rates=rates,
        strata_index=strata_index,
    )


def make_life_table(
    strata_columns: Sequence[str],
    age_range: tuple[int, int],
    year_range: tuple[int, int],
    rate_fn,
    strata_values: Sequence[tuple[str, ...]],
) -> LifeTable:
    """Build a table programmatically from rate_fn(age, year, strata) -> rate."""
    age_min, age_max = age_range
    year_min, year_max = year_range
    strata_values = [_norm_strata(s) for s in strata_values]
    rates = np.empty((age_max - age_min + 1, year_max - year_min + 1, len(strata_values)))
    for i, age in enumerate(range(age_min, age_max + 1)):
        for j, year in enumerate(range(year_min, year_max + 1)):
            for k, strata in enumerate(strata_values):
                r = float(rate_fn(age, year, strata))
                if not math.isfinite(r) or r < 0.0:
                    raise NegativeRate(f"rate_fn({age}, {year}, {strata}) = {r}")
                rates[i, j, k] = r
    return LifeTable(
        strata_columns=tuple(strata_columns),
        age_min=age_min,
        age_max=age_max,
        year_min=year_min,
        year_max=year_max,
        rates=rates,
        strata_index={s: i for i, s in enumerate(strata_values)},
    )
