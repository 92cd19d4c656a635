import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutnitsche.mesh import Box, build_structured_mesh, face_neighbors, write_mesh


def test_cell_and_face_counts():
    m = build_structured_mesh(4)
    assert m.num_cells == 32
    assert m.num_vertices == 25
    # 2 n (n + 1) axis edges plus n**2 diagonals
    assert m.num_faces == 2 * 4 * 5 + 16
    assert len(m.boundary_faces) == 16


def test_single_square():
    m = build_structured_mesh(1)
    assert m.num_cells == 2
    assert np.allclose(m.areas, 0.5)
    assert m.h == pytest.approx(np.sqrt(2))


def test_counterclockwise_and_partition():
    m = build_structured_mesh(5, Box(-1.0, 2.0, 0.0, 1.5))
    assert np.all(m.areas > 0)
    assert m.areas.sum() == pytest.approx(3.0 * 1.5, rel=1e-14)


def test_face_neighbors():
    m = build_structured_mesh(3)
    for f in m.interior_faces:
        assert len(face_neighbors(m, f)) == 2
    for f in m.boundary_faces:
        assert len(face_neighbors(m, f)) == 1
    with pytest.raises(ValueError):
        face_neighbors(m, m.num_faces)
    with pytest.raises(ValueError):
        face_neighbors(m, -1)


@pytest.mark.parametrize("n", [0, -2, 2.5])
def test_invalid_subdivisions(n):
    with pytest.raises(ValueError):
        build_structured_mesh(n)


def test_degenerate_box():
    with pytest.raises(ValueError):
        build_structured_mesh(2, Box(0.0, 0.0, 0.0, 1.0))


def test_refine_halves_h():
    m = build_structured_mesh(4)
    assert m.refine().h == pytest.approx(m.h / 2)


def test_arrays_are_read_only():
    m = build_structured_mesh(2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 1.0


def test_write_mesh(tmp_path):
    m = build_structured_mesh(2)
    p = tmp_path / "m.txt"
    write_mesh(m, p)
    lines = p.read_text().splitlines()
    assert sum(l.startswith("v ") for l in lines) == m.num_vertices
    assert sum(l.startswith("c ") for l in lines) == m.num_cells


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.floats(-5, 5), st.floats(0.1, 4), st.floats(-5, 5), st.floats(0.1, 4))
def test_structure_invariants(n, x0, w, y0, hgt):
    m = build_structured_mesh(n, Box(x0, x0 + w, y0, y0 + hgt))
    assert m.num_cells == 2 * n * n
    # every local edge of a cell is one of its faces
    for e in range(3):
        a = m.cells[:, e]
        b = m.cells[:, (e + 1) % 3]
        f = m.faces[m.cell_faces[:, e]]
        assert np.all(np.sort(np.column_stack([a, b]), axis=1) == f)
    # each interior face has two distinct cells that both reference it
    fc = m.face_cells[m.interior_faces]
    assert np.all(fc[:, 0] != fc[:, 1])
    assert np.isclose(m.areas.sum(), w * hgt, rtol=1e-12)
    nb = int(m.boundary_vertex_flags.sum())
    assert nb == 4 * n
