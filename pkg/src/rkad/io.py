"""GeoJSON ingestion, null-distribution archives and result documents."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import warnings
from pathlib import Path

import numpy as np
import shapely.geometry

from .errors import IncompatibleNullError, ValidationError
from .geometry import PolygonSet
from .statistic import NullDistribution, as_radii, null_fingerprint
from .study import ArealUnit, StudyArea

log = logging.getLogger(__name__)

NULL_SCHEMA = 1
RESULT_SCHEMA = 1

_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}


def _flag(value, k: int, field: str) -> int:
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if value in (0, 1):
            return int(value)
    elif isinstance(value, str):
        v = value.strip().lower()
        if v in _TRUE:
            return 1
        if v in _FALSE:
            return 0
    raise ValidationError(
        f"feature {k}: value {value!r} of field {field!r} is not a 0/1 flag"
    )


def _looks_geographic(bbox) -> bool:
    # inside the lon/lat box and small relative to its offset from the origin;
    # projected toy grids like [0, 20]^2 sit in range too but span their offset
    xmin, ymin, xmax, ymax = bbox
    in_range = -180.0 <= xmin and xmax <= 180.0 and -90.0 <= ymin and ymax <= 90.0
    extent = max(xmax - xmin, ymax - ymin)
    offset = max(abs(0.5 * (xmin + xmax)), abs(0.5 * (ymin + ymax)))
    return in_range and offset > extent


def load_study(path, observed_field: str | None, contiguity: str = "rook", *, validate: bool = True):
    """Read a GeoJSON FeatureCollection of Polygon/MultiPolygon features.

    Returns ``(StudyArea, pattern)`` where the pattern is the 0/1
    ``observed_field`` of each feature, in file order (``None`` when no
    field is named).  Coordinates are taken as planar; degree-like extents
    raise a warning.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read GeoJSON from {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ValidationError(f"{path} is not a GeoJSON FeatureCollection")
    features = doc.get("features") or []
    if not features:
        raise ValidationError(f"{path} has no features")

    units, flags = [], []
    for k, feat in enumerate(features):
        props = feat.get("properties") or {}
        if observed_field is None:
            pass
        elif observed_field not in props:
            near = [p for p in props if p.lower() == observed_field.lower()]
            hint = f" (did you mean {near[0]!r}?)" if len(near) == 1 else ""
            if len(near) > 1:
                raise ValidationError(
                    f"feature {k}: field {observed_field!r} is ambiguous among {near}"
                )
            raise ValidationError(f"feature {k}: missing field {observed_field!r}{hint}")
        else:
            flags.append(_flag(props[observed_field], k, observed_field))

        geom = feat.get("geometry")
        if not geom or geom.get("type") not in ("Polygon", "MultiPolygon"):
            kind = None if not geom else geom.get("type")
            raise ValidationError(f"feature {k}: geometry type {kind!r} is not a polygon")
        try:
            shp = shapely.geometry.shape(geom)
        except Exception as exc:  # shapely raises several types for bad coordinates
            raise ValidationError(f"feature {k}: unreadable geometry ({exc})") from exc
        if not shp.is_valid:
            from shapely.validation import explain_validity

            raise ValidationError(f"feature {k}: invalid ring topology ({explain_validity(shp)})")
        if not shp.area > 0:
            raise ValidationError(f"feature {k}: unit has zero area")
        try:
            g = PolygonSet.from_geojson(geom)
        except ValidationError as exc:
            raise ValidationError(f"feature {k}: {exc}") from exc
        uid = feat.get("id", props.get("id", k))
        units.append(ArealUnit.from_geometry(uid, g))

    ids = [u.id for u in units]
    if len(set(map(repr, ids))) != len(ids):
        units = [ArealUnit(k, u.geometry, u.centroid, u.area) for k, u in enumerate(units)]
        log.warning("feature ids are not unique; using feature positions instead")

    sa = StudyArea(units, contiguity=contiguity, validate=validate)
    if _looks_geographic(sa.bbox):
        warnings.warn(
            "coordinates look like longitude/latitude degrees; areas and radii are "
            "computed in planar units, so project the data first",
            stacklevel=2,
        )
    y = None if observed_field is None else np.array(flags, dtype=np.int8)
    log.info(
        "loaded %s: N=%d, n=%s, total area=%.6g",
        path, sa.n_units, "-" if y is None else int(y.sum()), sa.total_area,
    )
    return sa, y


def study_summary(sa: StudyArea, y) -> dict:
    return {
        "N": sa.n_units,
        "n": None if y is None else int(np.sum(y)),
        "total_area": sa.total_area,
        "bbox": list(sa.bbox),
        "contiguity": sa.contiguity,
    }


# --------------------------------------------------------------------------
# null archives
# --------------------------------------------------------------------------


def null_key(sa: StudyArea, n: int, radii, G: int, seed: int) -> str:
    h = hashlib.sha256(null_fingerprint(sa, radii).encode())
    h.update(f"{int(n)}:{int(G)}:{int(seed)}".encode())
    return h.hexdigest()[:24]


def save_null(path, null: NullDistribution) -> Path:
    path = Path(path)
    meta = {
        "schema": NULL_SCHEMA,
        "n": null.n,
        "G": null.G,
        "seed": null.seed,
        "fingerprint": null.fingerprint,
        "weighted": null.weighted,
    }
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(
            fh,
            radii=null.radii,
            m_hat=null.m_hat,
            t_samples=null.t_samples,
            meta=np.array(json.dumps(meta, sort_keys=True)),
        )
    os.replace(tmp, path)
    return path


def load_null(path, sa: StudyArea | None = None, n=None, radii=None, G=None, seed=None):
    """Read an archive written by :func:`save_null` and check it against the
    requested configuration; any mismatch raises IncompatibleNullError."""
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            null = NullDistribution(
                n=int(meta["n"]),
                radii=z["radii"].copy(),
                m_hat=z["m_hat"].copy(),
                t_samples=z["t_samples"].copy(),
                seed=int(meta["seed"]),
                fingerprint=meta["fingerprint"],
                weighted=bool(meta.get("weighted", False)),
            )
    except (OSError, KeyError, ValueError) as exc:
        raise ValidationError(f"cannot read null archive {path}: {exc}") from exc
    if meta.get("schema") != NULL_SCHEMA:
        raise IncompatibleNullError(
            f"{path} has schema {meta.get('schema')}, expected {NULL_SCHEMA}; regenerate it"
        )
    hint = f"; delete {path} or point the null cache elsewhere to rebuild"
    if radii is not None:
        r = as_radii(radii)
        if r.shape != null.radii.shape or not np.allclose(r, null.radii, rtol=1e-12, atol=0):
            raise IncompatibleNullError(f"cached null uses a different radius grid{hint}")
    if sa is not None and null.fingerprint != null_fingerprint(sa, null.radii):
        raise IncompatibleNullError(f"cached null belongs to a different study area{hint}")
    if n is not None and null.n != int(n):
        raise IncompatibleNullError(f"cached null has n={null.n}, need n={n}{hint}")
    if G is not None and null.G != int(G):
        raise IncompatibleNullError(f"cached null has G={null.G}, need G={G}{hint}")
    if seed is not None and null.seed != int(seed):
        raise IncompatibleNullError(f"cached null has seed={null.seed}, need seed={seed}{hint}")
    return null


def cached_null(cache, sa: StudyArea, n: int, radii, G: int, seed: int, build):
    """Load the null from ``cache`` when present, else ``build()`` and save it.

    ``cache`` is an ``.npz`` file or a directory (the file name is then
    derived from the configuration).
    """
    if cache is None:
        return build()
    cache = Path(cache)
    if cache.suffix != ".npz":
        cache.mkdir(parents=True, exist_ok=True)
        cache = cache / f"null-{null_key(sa, n, radii, G, seed)}.npz"
    if cache.exists():
        log.info("reusing null from %s", cache)
        return load_null(cache, sa, n, radii, G, seed)
    null = build()
    save_null(cache, null)
    return null


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------

CSV_FIELDS = ("radius","m_avg", "t_obs", "crit_lo", "crit_hi", "quantile_pos", "decision")


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if not math.isfinite(x) else x
    return x


def result_document(version: str, config: dict, sa: StudyArea, y, methods: dict, extra=None) -> dict:
    """Self-contained record of a test run: config echo, study summary and
    per-method results."""
    doc = {
        "schema": RESULT_SCHEMA,
        "tool": {"name": "rkad", "version": version},
        "config": config,
        "study": {**study_summary(sa, y), "fingerprint": sa.fingerprint},
        "methods": methods,
    }
    if extra:
        doc.update(extra)
    return _clean(doc)


def dumps_json(doc: dict) -> str:
    return json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"


def result_csv(doc: dict) -> str:
    """One row per radius of the RKAD result."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in doc["methods"].get("rkad", {}).get("radii", []):
        w.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_text(path, text: str):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
