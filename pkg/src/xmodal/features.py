"""Level-1 features: facial point placement and Gabor jets.

A fixed template of 176 points per face half is carried onto each image by
a Gaussian radial-basis warp fitted between 48 template landmarks and the
image's landmarks. At every warped point a jet of 40 Gabor magnitudes
(5 scales x 8 orientations, scale-major) is extracted.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .manifest import N_LANDMARKS, LandmarkSet

POINTS_PER_HALF = 176
N_POINTS = 2 * POINTS_PER_HALF
TEMPLATE_VERSION = 1
TEMPLATE_FILE = f"template_v{TEMPLATE_VERSION}.txt"

# template frame: 100 x 120 pixels, mirror axis at x = 50
TEMPLATE_AXIS = 50.0


class WarpError(ValueError):
    """The landmark configuration does not determine a warp."""


class PointOutsideImageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# template


_LEFT_LANDMARKS = [
    # brow
    (20.0, 36.0), (26.0, 33.0), (33.0, 32.5), (40.0, 34.0),
    # eye contour, centre last
    (24.0, 45.0), (28.0, 42.5), (36.0, 42.5), (40.0, 45.5), (32.0, 47.5), (32.0, 45.0),
    # nose flank
    (45.0, 52.0), (43.5, 62.0), (42.0, 70.0),
    # mouth
    (38.0, 84.0), (42.0, 81.0), (46.5, 80.5), (43.0, 89.0),
    # jaw
    (14.0, 50.0), (15.0, 62.0), (17.5, 74.0), (22.0, 86.0),
    (28.5, 96.0), (36.0, 103.5), (44.0, 108.0),
]
_LEFT_EYE_CENTRE = 9


def mirror_x(points, axis=TEMPLATE_AXIS):
    pts = np.array(points, dtype=np.float64)
    pts[..., 0] = 2.0 * axis - pts[..., 0]
    return pts


def standard_landmarks() -> LandmarkSet:
    left = np.array(_LEFT_LANDMARKS)
    pts = np.vstack([left, mirror_x(left)])
    return LandmarkSet(pts, _LEFT_EYE_CENTRE, _LEFT_EYE_CENTRE + len(left))


def _half_grid() -> np.ndarray:
    """176 left-half points on a half-ellipse face region, 16 rows x 11 columns."""
    cy, half_h, half_w, gap = 66.0, 50.0, 40.0, 2.0
    rows = np.linspace(cy - 0.9 * half_h, cy + 0.9 * half_h, 16)
    pts = []
    for y in rows:
        width = half_w * np.sqrt(1.0 - ((y - cy) / half_h) ** 2)
        for t in np.linspace(0.0, 1.0, 11):
            pts.append((TEMPLATE_AXIS - gap - t * (width - gap), y))
    return np.array(pts)


@dataclass(frozen=True)
class FacialPointTemplate:
    """Template points (left half first, then their mirror images) and landmarks."""

    points: np.ndarray            # (352, 2)
    landmarks: LandmarkSet
    version: int = TEMPLATE_VERSION

    def __post_init__(self):
        if self.points.shape != (N_POINTS, 2):
            raise ValueError(f"template needs {N_POINTS} points, got {self.points.shape}")

    @property
    def symmetry_map(self) -> np.ndarray:
        """Right-half index paired with each left-half index."""
        return np.arange(POINTS_PER_HALF) + POINTS_PER_HALF

    @property
    def halves(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points[:POINTS_PER_HALF], self.points[POINTS_PER_HALF:]

    @property
    def eye_distance(self) -> float:
        return self.landmarks.eye_distance


def generate_template() -> FacialPointTemplate:
    left = _half_grid()
    return FacialPointTemplate(np.vstack([left, mirror_x(left)]), standard_landmarks())


def format_template(t: FacialPointTemplate) -> str:
    lines = [f"# xmodal facial point template v{t.version}",
             f"# landmarks eyes {t.landmarks.eye_left} {t.landmarks.eye_right}"]
    for i, (x, y) in enumerate(t.points.tolist()):
        half = "left" if i < POINTS_PER_HALF else "right"
        lines.append(f"point {i} {half} {x!r} {y!r}")
    for i, (x, y) in enumerate(t.landmarks.points.tolist()):
        lines.append(f"landmark {i} {x!r} {y!r}")
    return "\n".join(lines) + "\n"


def parse_template(text: str) -> FacialPointTemplate:
    points, lms, eyes = {}, {}, None
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "#":
            if parts[1:3] == ["landmarks", "eyes"]:
                eyes = int(parts[3]), int(parts[4])
            continue
        if parts[0] == "point":
            points[int(parts[1])] = (float(parts[3]), float(parts[4]))
        elif parts[0] == "landmark":
            lms[int(parts[1])] = (float(parts[2]), float(parts[3]))
        else:
            raise ValueError(f"unrecognized template line {line!r}")
    if eyes is None:
        raise ValueError("template lacks the eye-index header")
    pts = np.array([points[i] for i in range(len(points))])
    lm = np.array([lms[i] for i in range(len(lms))])
    return FacialPointTemplate(pts, LandmarkSet(lm, *eyes))


def load_template() -> FacialPointTemplate:
    """The template shipped with the package."""
    text = resources.files("xmodal").joinpath("data", TEMPLATE_FILE).read_text()
    return parse_template(text)


# ---------------------------------------------------------------------------
# RBF warp


def _gauss_kernel(a, b, width):
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    return np.exp(-d2 / (2.0 * width * width))


@dataclass
class WarpModel:
    control_src: np.ndarray   # (48, 2) template landmarks
    control_dst: np.ndarray   # (48, 2) image landmarks
    kernel_width: float
    rbf_weights: np.ndarray   # (48, 2)
    affine: np.ndarray        # (3, 2): rows for [1, x, y]

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        K = _gauss_kernel(pts, self.control_src, self.kernel_width)
        P = np.column_stack([np.ones(len(pts)), pts])
        return K @ self.rbf_weights + P @ self.affine

    def __eq__(self, other):
        if not isinstance(other, WarpModel):
            return NotImplemented
        return (self.kernel_width == other.kernel_width
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("control_src", "control_dst", "rbf_weights", "affine")))


def fit_warp(src: LandmarkSet, dst: LandmarkSet, eye_distance: float | None = None,
             deformation_factor: float = 0.1) -> WarpModel:
    """Gaussian RBF + affine interpolant taking ``src`` landmarks onto ``dst``.

    The kernel width is ``deformation_factor * eye_distance``; the eye
    distance defaults to that of ``src`` since the kernel acts in source
    coordinates.
    """
    S = np.asarray(src.points if isinstance(src, LandmarkSet) else src, dtype=np.float64)
    D = np.asarray(dst.points if isinstance(dst, LandmarkSet) else dst, dtype=np.float64)
    if S.shape != (N_LANDMARKS, 2) or D.shape != (N_LANDMARKS, 2):
        raise WarpError(f"warp needs {N_LANDMARKS} landmark pairs")
    if eye_distance is None:
        if not isinstance(src, LandmarkSet):
            raise WarpError("eye_distance is required for raw point arrays")
        eye_distance = src.eye_distance
    if not eye_distance > 0:
        raise WarpError("eye_distance must be positive")
    width = deformation_factor * eye_distance
    n = len(S)
    P = np.column_stack([np.ones(n), S])
    A = np.zeros((n + 3, n + 3))
    A[:n, :n] = _gauss_kernel(S, S, width)
    A[:n, n:] = P
    A[n:, :n] = P.T
    rhs = np.zeros((n + 3, 2))
    rhs[:n] = D
    if np.linalg.cond(A) > 1e12:
        raise WarpError("degenerate landmark configuration (singular RBF system)")
    sol = np.linalg.solve(A, rhs)
    return WarpModel(S.copy(), D.copy(), float(width), sol[:n], sol[n:])


def warp_points(model: WarpModel, template) -> np.ndarray:
    pts = template.points if isinstance(template, FacialPointTemplate) else template
    return model(pts)


# ---------------------------------------------------------------------------
# Gabor jets


@dataclass(frozen=True)
class GaborBankSpec:
    """Jet-family Gabor wavelets.

    Peak frequency of scale ``v`` is ``k_max / k_factor**v``; orientation
    ``u`` points at angle ``u * pi / n_orientations``. Each sampled kernel is
    made exactly zero-mean and scaled to unit energy.
    """

    n_orientations: int = 8
    n_scales: int = 5
    k_max: float = np.pi / 2
    k_factor: float = np.sqrt(2.0)
    sigma: float = 2 * np.pi
    patch_radius: int = 0  # 0: three envelope widths of the coarsest scale

    def __post_init__(self):
        if self.n_orientations < 1 or self.n_scales < 1:
            raise ValueError("need at least one scale and orientation")

    @property
    def n_kernels(self) -> int:
        return self.n_orientations * self.n_scales

    @property
    def radius(self) -> int:
        if self.patch_radius:
            return int(self.patch_radius)
        return int(np.ceil(3.0 * self.sigma / self.frequencies[-1]))

    @property
    def frequencies(self) -> np.ndarray:
        return self.k_max / self.k_factor ** np.arange(self.n_scales)

    @property
    def orientations(self) -> np.ndarray:
        return np.arange(self.n_orientations) * np.pi / self.n_orientations

    def mirror_permutation(self) -> np.ndarray:
        """Kernel index that a horizontal mirror maps each kernel onto."""
        u = np.arange(self.n_orientations)
        mirrored = (-u) % self.n_orientations
        return (np.arange(self.n_scales)[:, None] * self.n_orientations + mirrored).ravel()

    def kernels(self) -> np.ndarray:
        return _kernels(self)


_KERNEL_CACHE: dict = {}


def _kernels(spec: GaborBankSpec) -> np.ndarray:
    key = (spec.n_orientations, spec.n_scales, spec.k_max, spec.k_factor, spec.sigma, spec.radius)
    if key not in _KERNEL_CACHE:
        r = spec.radius
        y, x = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
        out = []
        for k in spec.frequencies:
            for theta in spec.orientations:
                kx, ky = k * np.cos(theta), k * np.sin(theta)
                env = (k * k / spec.sigma ** 2) * np.exp(-k * k * (x * x + y * y)
                                                         / (2 * spec.sigma ** 2))
                g = env * (np.exp(1j * (kx * x + ky * y)) - np.exp(-spec.sigma ** 2 / 2))
                g = g - g.mean()
                g = g / np.sqrt(np.sum(np.abs(g) ** 2))
                out.append(g)
        bank = np.stack(out)
        bank.setflags(write=False)
        _KERNEL_CACHE[key] = bank
    return _KERNEL_CACHE[key]


def _patch(image, cx, cy, r):
    h, w = image.shape
    out = np.zeros((2 * r + 1, 2 * r + 1))
    y0, y1 = max(cy - r, 0), min(cy + r + 1, h)
    x0, x1 = max(cx - r, 0), min(cx + r + 1, w)
    out[y0 - (cy - r):y1 - (cy - r), x0 - (cx - r):x1 - (cx - r)] = image[y0:y1, x0:x1]
    return out


def extract_jets(image, points, bank: GaborBankSpec = GaborBankSpec()) -> np.ndarray:
    """Gabor magnitudes at each point: array of shape (n_points, n_kernels).

    Points are rounded to the nearest pixel; the image is zero-padded
    beyond its border. A point whose pixel lies outside the image is an
    error.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("expected a 2-D grayscale image")
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    ij = np.rint(pts).astype(int)
    h, w = image.shape
    bad = (ij[:, 0] < 0) | (ij[:, 0] >= w) | (ij[:, 1] < 0) | (ij[:, 1] >= h)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise PointOutsideImageError(f"point {i} at {tuple(pts[i])} lies outside the "
                                     f"{w}x{h} image")
    K = _kernels(bank)
    r = bank.radius
    flat = K.reshape(len(K), -1)
    patches = np.stack([_patch(image, cx, cy, r).ravel() for cx, cy in ij])
    return np.abs(patches @ flat.T)


def extract_jet(image, point, bank: GaborBankSpec = GaborBankSpec()) -> np.ndarray:
    return extract_jets(image, [point], bank)[0]


def extract_face(image, landmarks: LandmarkSet, template: FacialPointTemplate,
                 bank: GaborBankSpec = GaborBankSpec(), deformation_factor: float = 0.1):
    """Warp the template onto an image and return jets shaped (2, 176, n_kernels).

    Axis 0 is the half (left, right). Right-half jets are stored in the
    mirrored kernel order so both halves are directly comparable.
    """
    warp = fit_warp(template.landmarks, landmarks, deformation_factor=deformation_factor)
    pts = warp_points(warp, template)
    jets = extract_jets(image, pts, bank)
    left, right = jets[:POINTS_PER_HALF], jets[POINTS_PER_HALF:]
    return np.stack([left, right[:, bank.mirror_permutation()]])
