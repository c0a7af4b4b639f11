"""Result persistence: field CSV/JSON, kernel tables, run records.

All floating-point output goes through ``fmt`` (shortest round-trip repr,
which preserves the full 17-significant-digit double precision), so written
tables read back bit-exactly.
"""

import hashlib
import json
import os
import time

import numpy as np

from .errors import ContractError
from .fields import SpaceTimeField, TimeGrid


def fmt(x):
    """Shortest decimal representation that round-trips a double."""
    return repr(float(x))


def save_field(field, base_path):
    """Write a field as ``base.csv`` (k,j,re,im) plus ``base.json`` metadata.

    Returns the two paths written.
    """
    csv_path = base_path + ".csv"
    json_path = base_path + ".json"
    K, n_t = field.coeffs.shape
    with open(csv_path, "w") as fh:
        fh.write("k,j,re,im\n")
        for k in range(K):
            row = field.coeffs[k]
            for j in range(n_t):
                fh.write("%d,%d,%s,%s\n" % (k, j, fmt(row[j].real),
                                            fmt(row[j].imag)))
    meta = {
        "half_width": field.grid.half_width,
        "n_t": field.grid.n_t,
        "K": K,
        "real_valued": field.real_valued,
        "eigenvalue_digest": digest_array(field.sys.eigenvalues),
    }
    with open(json_path, "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def load_field(base_path, sys):
    """Read a field written by ``save_field`` back onto ``sys``."""
    json_path = base_path + ".json"
    csv_path = base_path + ".csv"
    with open(json_path) as fh:
        meta = json.load(fh)
    if meta["K"] != sys.K:
        raise ContractError("stored field has K=%d, system has K=%d"
                            % (meta["K"], sys.K))
    if meta["eigenvalue_digest"] != digest_array(sys.eigenvalues):
        raise ContractError("stored field belongs to a different eigensystem")
    grid = TimeGrid(half_width=meta["half_width"], n_t=meta["n_t"])
    coeffs = np.zeros((meta["K"], meta["n_t"]), dtype=complex)
    with open(csv_path) as fh:
        header = fh.readline().strip()
        if header != "k,j,re,im":
            raise ContractError("unexpected field CSV header %r" % header)
        for line in fh:
            kk, jj, re, im = line.rstrip("\n").split(",")
            coeffs[int(kk), int(jj)] = float(re) + 1j * float(im)
    return SpaceTimeField(sys, grid, coeffs, meta["real_valued"])


def save_kernel_csv(path, xs, zs, taus, values):
    """Kernel tabulation ``x,z,tau,value`` (one row per combination)."""
    with open(path, "w") as fh:
        fh.write("x,z,tau,value\n")
        for it, tau in enumerate(taus):
            for ix, x in enumerate(xs):
                for iz, z in enumerate(zs):
                    fh.write("%s,%s,%s,%s\n" % (fmt(x), fmt(z), fmt(tau),
                                                fmt(values[it][ix, iz])))


def save_table_csv(path, header, rows):
    """Generic CSV with every float through ``fmt``."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                str(c) if isinstance(c, (int, np.integer)) else fmt(c)
                for c in row) + "\n")


def save_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=_jsonify)
        fh.write("\n")


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    raise TypeError("cannot serialize %r" % (obj,))


def save_multiplier_json(path, multiplier, eigenvalues, frequencies):
    """Per-bin symbol dump for debugging diagonal operators."""
    tab = multiplier.table(eigenvalues, frequencies)
    payload = {
        "descriptor": multiplier.descriptor,
        "eigenvalues": [float(l) for l in eigenvalues],
        "frequencies": [float(r) for r in frequencies],
        "re": tab.real,
        "im": tab.imag,
    }
    save_json(path, payload)
    return path


def digest_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def digest_array(arr):
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def _timestamp():
    """ISO timestamp; honors SOURCE_DATE_EPOCH for reproducible records."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def write_run_record(outdir, config_raw, files, version, started):
    """Run record with digests of every produced file."""
    record = {
        "toolkit_version": version,
        "started": started,
        "finished": _timestamp(),
        "config": config_raw,
        "files": [{"name": os.path.basename(p), "sha256": digest_file(p)}
                  for p in sorted(files)],
    }
    path = os.path.join(outdir, "run.json")
    save_json(path, record)
    return path


def run_started():
    return _timestamp()
