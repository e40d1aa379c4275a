import json

import numpy as np
import pytest

from rkad.geometry import PolygonSet
from rkad.simstudy import make_grid_study
from rkad.study import ArealUnit, StudyArea


def grid_feature_collection(rows, cols, flags=None, cell=1.0, origin=(0.0, 0.0)):
    """GeoJSON dict of a rows x cols grid, row-major, with an ``obs`` flag."""
    feats = []
    for i in range(rows):
        for j in range(cols):
            x0 = origin[0] + j * cell
            y0 = origin[1] + i * cell
            ring = [[x0, y0], [x0 + cell, y0], [x0 + cell, y0 + cell], [x0, y0 + cell], [x0, y0]]
            k = i * cols + j
            props = {} if flags is None else {"obs": int(flags[k])}
            feats.append(
                {
                    "type": "Feature",
                    "id": f"u{k}",
                    "properties": props,
                    "geometry": {"type": "Polygon", "coordinates": [ring]},
                }
            )
    return {"type": "FeatureCollection", "features": feats}


@pytest.fixture
def write_geojson(tmp_path):
    def _write(doc, name="study.geojson"):
        p = tmp_path / name
        p.write_text(json.dumps(doc))
        return p

    return _write


@pytest.fixture(scope="session")
def grid20():
    return make_grid_study(20, 20)


def study_from_boxes(boxes, **kw):
    units = [ArealUnit.from_geometry(k, PolygonSet.box(*b)) for k, b in enumerate(boxes)]
    return StudyArea(units, **kw)


def random_star_polygon(rng, n_vertices=None, center=(0.0, 0.0), scale=1.0):
    """Random simple polygon: vertices at sorted angles around ``center``."""
    k = int(rng.integers(3, 13)) if n_vertices is None else n_vertices
    step = 2 * np.pi / k
    ang = np.arange(k) * step + rng.uniform(0, 0.8 * step, k)
    rad = scale * rng.uniform(0.3, 1.0, k)
    pts = np.column_stack([center[0] + rad * np.cos(ang), center[1] + rad * np.sin(ang)])
    return PolygonSet.from_coords(pts)


# one line per acceptance criterion, echoed again in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
