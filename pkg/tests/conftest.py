import numpy as np
import pytest

from shapereg.shape_model import Frame, LandmarkSet, compute_pca


def random_canonical_corpus(num_shapes, num_landmarks, seed, spread=20.0):
    rng = np.random.default_rng(seed)
    return [
        LandmarkSet(rng.normal(100.0, spread, (num_landmarks, 2)), Frame.CANONICAL)
        for _ in range(num_shapes)
    ]


@pytest.fixture
def small_model():
    """Full-rank model from a 30-shape, 8-landmark random canonical corpus."""
    return compute_pca(random_canonical_corpus(30, 8, seed=42))


def synthetic_face_68(seed=0, rotation_deg=0.0):
    """A stylized 68-point face layout (iBUG index semantics for the eyes)."""
    rng = np.random.default_rng(seed)
    pts = np.zeros((68, 2))
    # jaw 0-16
    t = np.linspace(np.pi * 0.15, np.pi * 0.85, 17)
    pts[0:17] = np.stack([250 + 120 * np.cos(t[::-1]), 260 + 130 * np.sin(t[::-1])], axis=1)
    # brows 17-26
    pts[17:22] = np.stack([np.linspace(175, 235, 5), np.full(5, 185.0)], axis=1)
    pts[22:27] = np.stack([np.linspace(265, 325, 5), np.full(5, 185.0)], axis=1)
    # nose 27-35
    pts[27:31] = np.stack([np.full(4, 250.0), np.linspace(205, 265, 4)], axis=1)
    pts[31:36] = np.stack([np.linspace(230, 270, 5), np.full(5, 280.0)], axis=1)
    # eyes 36-41 / 42-47 (hexagons)
    a = np.linspace(0, 2 * np.pi, 6, endpoint=False)
    pts[36:42] = np.stack([205 + 22 * np.cos(a), 215 + 9 * np.sin(a)], axis=1)
    pts[42:48] = np.stack([295 + 22 * np.cos(a), 215 + 9 * np.sin(a)], axis=1)
    # mouth 48-67
    b = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    pts[48:60] = np.stack([250 + 35 * np.cos(b), 320 + 16 * np.sin(b)], axis=1)
    c = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    pts[60:68] = np.stack([250 + 18 * np.cos(c), 320 + 8 * np.sin(c)], axis=1)
    pts += rng.normal(0, 1.5, pts.shape)
    if rotation_deg:
        theta = np.deg2rad(rotation_deg)
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        centroid = pts.mean(axis=0)
        pts = (pts - centroid) @ rot.T + centroid
    return pts


def to_pts_text(points):
    lines = ["version: 1", f"n_points: {len(points)}", "{"]
    lines += [f"{x:.6f} {y:.6f}" for x, y in points]
    lines.append("}")
    return "\n".join(lines) + "\n"
