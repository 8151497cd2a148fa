"""Run configuration files.

Line-oriented ``key = value`` format; ``#`` starts a comment, blank lines
are ignored.  Keys:

    system.form          "model" (default) or "general"
    system.P, system.Q   model-form coefficient expressions (model only)
    system.X[i][j]       component j of field i, i,j in 1..3 (general only)
    chart.min, chart.max chart box corners; one float or three
                         comma-separated floats (defaults -1 and 1)
    num.resolution       locus grid resolution, int or three ints (default 9)
    num.dt               characteristic integration step (default 1e-3)
    num.N                control intervals for endpoint checks (default 50)
    num.rank_tol         singularity threshold on sigma_3/sigma_1 (default 1e-6)
    num.tangency_cutoff  characteristic margin cutoff (default 1e-4)

Unknown keys, duplicate keys, malformed values, and form/key mismatches all
raise ConfigError carrying the offending line number.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ConfigError, ExprSyntaxError
from .system import Box, build_general_system, build_model_system

_X_KEY = re.compile(r"^system\.X\[([123])\]\[([123])\]$")
_KNOWN = {
    "system.form", "system.P", "system.Q",
    "chart.min", "chart.max",
    "num.resolution", "num.dt", "num.N",
    "num.rank_tol", "num.tangency_cutoff",
}

DEFAULT_CHART_MIN = -1.0
DEFAULT_CHART_MAX = 1.0
DEFAULT_RESOLUTION = 9
DEFAULT_DT = 1e-3
DEFAULT_N = 50
DEFAULT_RANK_TOL = 1e-6
DEFAULT_TANGENCY_CUTOFF = 1e-4


@dataclass(frozen=True, eq=False)
class RunConfig:
    form: str
    system: object
    chart: Box
    resolution: object
    dt: float
    n_intervals: int
    rank_tol: float
    tangency_cutoff: float


def _parse_float(value, key, line):
    try:
        out = float(value)
    except ValueError:
        raise ConfigError(f"invalid number for {key}: {value!r}",
                          line=line) from None
    if out != out or out in (float("inf"), float("-inf")):
        raise ConfigError(f"non-finite value for {key}", line=line)
    return out


def _parse_int(value, key, line):
    try:
        return int(value, 10)
    except ValueError:
        raise ConfigError(f"invalid integer for {key}: {value!r}",
                          line=line) from None


def _parse_triple(value, key, line, conv):
    parts = [p.strip() for p in value.split(",")]
    if len(parts) == 1:
        v = conv(parts[0], key, line)
        return (v, v, v)
    if len(parts) == 3:
        return tuple(conv(p, key, line) for p in parts)
    raise ConfigError(f"{key} takes one value or three comma-separated "
                      f"values, got {len(parts)}", line=line)


def _scan(text):
    entries = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {line!r}", line=ln)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError("missing key before '='", line=ln)
        if not value:
            raise ConfigError(f"missing value for {key!r}", line=ln)
        if key not in _KNOWN and not _X_KEY.match(key):
            raise ConfigError(f"unknown key {key!r}", line=ln)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r}", line=ln)
        entries[key] = (value, ln)
    return entries


def parse_config(text):
    """Parse config text and build the configured system."""
    entries = _scan(text)

    form, form_line = entries.pop("system.form", ("model", None))
    if form not in ("model", "general"):
        raise ConfigError(f"system.form must be 'model' or 'general', "
                          f"got {form!r}", line=form_line)

    lo_raw, lo_line = entries.pop("chart.min", (None, None))
    hi_raw, hi_line = entries.pop("chart.max", (None, None))
    lo = (_parse_triple(lo_raw, "chart.min", lo_line, _parse_float)
          if lo_raw is not None else (DEFAULT_CHART_MIN,) * 3)
    hi = (_parse_triple(hi_raw, "chart.max", hi_line, _parse_float)
          if hi_raw is not None else (DEFAULT_CHART_MAX,) * 3)
    try:
        chart = Box(lo, hi)
    except ValueError as e:
        raise ConfigError(str(e), line=hi_line or lo_line) from None

    res_raw, res_line = entries.pop("num.resolution", (None, None))
    if res_raw is None:
        resolution = DEFAULT_RESOLUTION
    else:
        resolution = _parse_triple(res_raw, "num.resolution", res_line,
                                   _parse_int)
        if resolution[0] == resolution[1] == resolution[2]:
            resolution = resolution[0]
        if min(resolution if isinstance(resolution, tuple)
               else (resolution,)) < 2:
            raise ConfigError("num.resolution must be at least 2",
                              line=res_line)

    dt_raw, dt_line = entries.pop("num.dt", (None, None))
    dt = _parse_float(dt_raw, "num.dt", dt_line) if dt_raw else DEFAULT_DT
    if dt <= 0.0:
        raise ConfigError("num.dt must be positive", line=dt_line)

    n_raw, n_line = entries.pop("num.N", (None, None))
    n_intervals = _parse_int(n_raw, "num.N", n_line) if n_raw else DEFAULT_N
    if n_intervals < 1:
        raise ConfigError("num.N must be at least 1", line=n_line)

    rt_raw, rt_line = entries.pop("num.rank_tol", (None, None))
    rank_tol = (_parse_float(rt_raw, "num.rank_tol", rt_line)
                if rt_raw else DEFAULT_RANK_TOL)
    if rank_tol <= 0.0:
        raise ConfigError("num.rank_tol must be positive", line=rt_line)

    tc_raw, tc_line = entries.pop("num.tangency_cutoff", (None, None))
    tangency_cutoff = (_parse_float(tc_raw, "num.tangency_cutoff", tc_line)
                       if tc_raw else DEFAULT_TANGENCY_CUTOFF)
    if tangency_cutoff < 0.0:
        raise ConfigError("num.tangency_cutoff must be nonnegative",
                          line=tc_line)

    if form == "model":
        system = _build_model(entries, chart)
    else:
        system = _build_general(entries, chart)
    return RunConfig(form=form, system=system, chart=chart,
                     resolution=resolution, dt=dt, n_intervals=n_intervals,
                     rank_tol=rank_tol, tangency_cutoff=tangency_cutoff)


def _build_model(entries, chart):
    for key, (_, ln) in entries.items():
        if _X_KEY.match(key):
            raise ConfigError(f"{key} is not allowed when system.form is "
                              f"'model'", line=ln)
    if "system.P" not in entries:
        raise ConfigError("system.P is required when system.form is 'model'")
    if "system.Q" not in entries:
        raise ConfigError("system.Q is required when system.form is 'model'")
    p_raw, p_line = entries.pop("system.P")
    q_raw, q_line = entries.pop("system.Q")
    try:
        return build_model_system(p_raw, q_raw, chart)
    except ExprSyntaxError as e:
        # attribute the parse failure to whichever expression is broken
        for raw, ln, key in ((p_raw, p_line, "system.P"),
                             (q_raw, q_line, "system.Q")):
            try:
                from .expr import parse_expr
                parse_expr(raw)
            except ExprSyntaxError:
                raise ConfigError(f"invalid expression for {key}: {e}",
                                  line=ln) from None
        raise ConfigError(f"invalid expression: {e}") from None
    except ValueError as e:
        raise ConfigError(str(e), line=p_line) from None


def _build_general(entries, chart):
    for key in ("system.P", "system.Q"):
        if key in entries:
            raise ConfigError(f"{key} is not allowed when system.form is "
                              f"'general'", line=entries[key][1])
    cells = {}
    for key, (value, ln) in list(entries.items()):
        m = _X_KEY.match(key)
        if not m:
            continue
        i, j = int(m.group(1)), int(m.group(2))
        cells[(i, j)] = (value, ln, key)
        entries.pop(key)
    missing = [f"system.X[{i}][{j}]" for i in (1, 2, 3) for j in (1, 2, 3)
               if (i, j) not in cells]
    if missing:
        raise ConfigError("missing " + ", ".join(missing) +
                          " (general form needs all nine components)")
    from .expr import parse_expr
    columns = []
    for i in (1, 2, 3):
        col = []
        for j in (1, 2, 3):
            value, ln, key = cells[(i, j)]
            try:
                col.append(parse_expr(value))
            except ExprSyntaxError as e:
                raise ConfigError(f"invalid expression for {key}: {e}",
                                  line=ln) from None
        columns.append(tuple(col))
    try:
        return build_general_system(tuple(columns), chart)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def load_config(path):
    with open(path, "r") as fh:
        text = fh.read()
    return parse_config(text)
