"""On-disk formats: binary grid functions, CSV reports, run manifests.

Grid-function files are little-endian: a 5-byte magic "DGPH1", then u32
spatial dimension d, u32 time-slice count, d u32 node counts, then the
values as f64 in row-major (time-major) order.  Loading validates the
magic and that the payload length matches the header exactly; grid
geometry is not stored and must be supplied by the caller.

CSV files use '.' as the decimal separator and 17 significant digits so
every float round-trips.  Reruns with the same config and seed produce
byte-identical CSVs; only the manifest carries a timestamp.
"""

from __future__ import annotations

import json
import struct
import time

import numpy as np

from .grid import GridFunction

MAGIC = b"DGPH1"


class FormatError(ValueError):
    pass


def save_grid_function(path, gf):
    values = np.ascontiguousarray(gf.values, dtype="<f8")
    d = gf.grid.d
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", d, gf.grid.n_t))
        fh.write(struct.pack("<%dI" % d, *gf.grid.shape))
        fh.write(values.tobytes())


def load_grid_function(path, grid=None):
    """Read values; with a grid supplied, return a GridFunction on it."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:5] != MAGIC:
        raise FormatError("bad magic %r; not a grid-function file"
                          % raw[:5])
    if len(raw) < 13:
        raise FormatError("truncated header")
    d, n_t = struct.unpack_from("<II", raw, 5)
    if d < 1 or d > 16:
        raise FormatError("implausible dimension %d" % d)
    if len(raw) < 13 + 4 * d:
        raise FormatError("truncated header")
    shape = struct.unpack_from("<%dI" % d, raw, 13)
    count = n_t * int(np.prod(shape))
    expect = 13 + 4 * d + 8 * count
    if len(raw) != expect:
        raise FormatError("payload length %d does not match header "
                          "(expected %d bytes)" % (len(raw), expect))
    values = np.frombuffer(raw, dtype="<f8", offset=13 + 4 * d,
                           count=count).reshape((n_t,) + shape)
    if grid is None:
        return d, n_t, shape, values.copy()
    if grid.shape != shape or grid.n_t != n_t:
        raise FormatError("file shape %s x %d does not match grid %s x %d"
                          % (shape, n_t, grid.shape, grid.n_t))
    return GridFunction(grid, values.copy())


def solve_report_csv(report):
    lines = ["step,iterations,residual"]
    for step, iters, res in report.steps:
        lines.append("%d,%d,%.17g" % (step, iters, res))
    return "\n".join(lines) + "\n"


def convergence_csv(study):
    lines = ["h,dt,sup_error"]
    for h, dt, err in study.rows:
        lines.append("%.17g,%.17g,%.17g" % (h, dt, err))
    if study.order is not None:
        lines.append("# fitted order (%s): %.17g" % (study.mode,
                                                     study.order))
    return "\n".join(lines) + "\n"


def assumption_report_csv(report):
    lines = ["quantity,value,pass"]
    for name, value, ok in report.as_rows():
        lines.append("%s,%.17g,%s" % (name, value,
                                      "pass" if ok else "fail"))
    return "\n".join(lines) + "\n"


def write_manifest(path, config, command, seed, extra=None):
    payload = {
        "command": command,
        "seed": seed,
        "config": config,
        "versions": _versions(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _versions():
    import scipy
    import sympy
    return {"numpy": np.__version__, "scipy": scipy.__version__,
            "sympy": sympy.__version__}
