"""
Camera model, perspective projection and oriented 3D box geometry.

Boxes follow the KITTI camera convention: the location is the bottom-face
center, the y axis points down and yaw rotates about the vertical axis.
BEV footprints live in the (x, z) ground plane.
"""
import math
from dataclasses import dataclass, replace

import numpy as np

from .choices import IoUKind
from .exceptions import DomainError

# Vertex-coincidence tolerance for polygon clipping (meters)
VERTEX_EPS = 1e-9

# Intersection areas below this are treated as empty (square meters)
AREA_EPS = 1e-12


def normalize_yaw(yaw):
    """Wrap an angle into (-pi, pi]"""
    wrapped = math.remainder(float(yaw), 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal length and principal point, in pixels"""
    f: float
    c_u: float
    c_v: float

    def __post_init__(self):
        if not (math.isfinite(self.f) and self.f > 0):
            raise DomainError(f'Focal length must be positive, got {self.f}')


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box in camera coordinates (meters, radians)"""
    x: float
    y: float
    z: float
    h: float
    w: float
    l: float  # noqa: E741
    yaw: float = 0.0

    def __post_init__(self):
        for name in ('h', 'w', 'l'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f'Box dimension {name} must be positive, got {value}')
        object.__setattr__(self, 'yaw', normalize_yaw(self.yaw))

    @property
    def volume(self):
        return self.h * self.w * self.l

    @property
    def diagonal(self):
        return math.sqrt(self.h ** 2 + self.w ** 2 + self.l ** 2)

    @property
    def depth_extent(self):
        """Extent of the BEV footprint projected onto the z axis"""
        return self.l * abs(math.sin(self.yaw)) + self.w * abs(math.cos(self.yaw))

    @property
    def vertical_range(self):
        """(top, bottom) y coordinates; y grows downwards"""
        return self.y - self.h, self.y

    def footprint(self):
        """BEV rectangle as a counter-clockwise Polygon2D in the (x, z) plane"""
        cos_t, sin_t = math.cos(self.yaw), math.sin(self.yaw)
        half_l, half_w = self.l / 2.0, self.w / 2.0
        points = []
        for x_c, z_c in ((half_l, half_w), (half_l, -half_w), (-half_l, -half_w), (-half_l, half_w)):
            points.append((
                self.x + cos_t * x_c + sin_t * z_c,
                self.z - sin_t * x_c + cos_t * z_c,
            ))
        return Polygon2D.from_points(points)

    def to_dict(self):
        return {'x': self.x, 'y': self.y, 'z': self.z, 'h': self.h, 'w': self.w, 'l': self.l, 'yaw': self.yaw}

    @classmethod
    def from_dict(cls, data):
        return cls(**{key: float(data[key]) for key in ('x', 'y', 'z', 'h', 'w', 'l', 'yaw')})


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def polygon_area(vertices):
    """Signed shoelace area; positive for counter-clockwise order"""
    area = 0.0
    count = len(vertices)
    for i in range(count):
        x1, z1 = vertices[i]
        x2, z2 = vertices[(i + 1) % count]
        area += x1 * z2 - x2 * z1
    return 0.5 * area


@dataclass(frozen=True)
class Polygon2D:
    """Convex polygon with counter-clockwise vertices"""
    vertices: tuple

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise DomainError(f'A polygon needs at least 3 vertices, got {len(self.vertices)}')
        count = len(self.vertices)
        for i in range(count):
            turn = _cross(self.vertices[i], self.vertices[(i + 1) % count], self.vertices[(i + 2) % count])
            if turn < -VERTEX_EPS:
                raise DomainError('Polygon vertices must be convex and counter-clockwise')

    @classmethod
    def from_points(cls, points):
        """Build from a convex vertex loop in either orientation"""
        points = [(float(px), float(pz)) for px, pz in points]
        if polygon_area(points) < 0:
            points.reverse()
        return cls(tuple(points))

    @property
    def area(self):
        return polygon_area(self.vertices)

    def bounds(self):
        xs = [v[0] for v in self.vertices]
        zs = [v[1] for v in self.vertices]
        return min(xs), min(zs), max(xs), max(zs)

    def clip(self, other):
        """
        Sutherland-Hodgman clipping of this polygon by the convex ``other``.

        Returns the vertex list of the intersection (possibly empty). Points on
        a clip edge, within VERTEX_EPS, count as inside.
        """
        output = list(self.vertices)
        clip_vertices = other.vertices
        cp1 = clip_vertices[-1]
        for cp2 in clip_vertices:
            if not output:
                break
            dx, dz = cp2[0] - cp1[0], cp2[1] - cp1[1]
            edge_len = math.hypot(dx, dz)

            def side(p):
                return (dx * (p[1] - cp1[1]) - dz * (p[0] - cp1[0])) / edge_len

            source = output
            output = []
            start = source[-1]
            start_side = side(start)
            for end in source:
                end_side = side(end)
                if end_side >= -VERTEX_EPS:
                    if start_side < -VERTEX_EPS:
                        output.append(_edge_crossing(start, end, start_side, end_side))
                    output.append(end)
                elif start_side >= -VERTEX_EPS:
                    output.append(_edge_crossing(start, end, start_side, end_side))
                start, start_side = end, end_side
            cp1 = cp2
        return _dedupe(output)


def _edge_crossing(start, end, start_side, end_side):
    t = start_side / (start_side - end_side)
    return (start[0] + t * (end[0] - start[0]), start[1] + t * (end[1] - start[1]))


def _dedupe(vertices):
    result = []
    for vertex in vertices:
        if result and math.hypot(vertex[0] - result[-1][0], vertex[1] - result[-1][1]) <= VERTEX_EPS:
            continue
        result.append(vertex)
    while len(result) > 1 and math.hypot(result[0][0] - result[-1][0], result[0][1] - result[-1][1]) <= VERTEX_EPS:
        result.pop()
    return result


def intersection_area(a, b):
    """Area of the intersection of two convex polygons"""
    ax0, az0, ax1, az1 = a.bounds()
    bx0, bz0, bx1, bz1 = b.bounds()
    if ax1 <= bx0 or bx1 <= ax0 or az1 <= bz0 or bz1 <= az0:
        return 0.0
    clipped = a.clip(b)
    if len(clipped) < 3:
        return 0.0
    area = polygon_area(clipped)
    return area if area >= AREA_EPS else 0.0


def project_depth(f, h3d, h2d):
    """Depth from the pinhole relation d = f * h3d / h2d"""
    if not (f > 0 and h3d > 0 and h2d > 0):
        raise DomainError(f'project_depth needs positive inputs, got f={f}, h3d={h3d}, h2d={h2d}')
    return f * h3d / h2d


def backproject_ray(u, v, camera):
    """Normalised camera ray (x_np, y_np, 1) through pixel (u, v)"""
    return (u - camera.c_u) / camera.f, (v - camera.c_v) / camera.f, 1.0


def decode_center(u, v, depth, camera):
    """3D point on the ray through (u, v) at the given depth"""
    if not depth > 0:
        raise DomainError(f'Depth must be positive, got {depth}')
    x_np, y_np, _ = backproject_ray(u, v, camera)
    return x_np * depth, y_np * depth, depth


def project_point(x, y, z, camera):
    """Pixel coordinates of a camera-frame point"""
    if not z > 0:
        raise DomainError(f'Cannot project a point with non-positive depth {z}')
    return camera.f * x / z + camera.c_u, camera.f * y / z + camera.c_v


def box_corners(box):
    """
    Eight corners of the box as an (8, 3) array.

    Rows 0-3 are the bottom face (y = box.y), rows 4-7 the top face
    (y = box.y - h), both in footprint order.
    """
    footprint = box.footprint().vertices
    bottom = [(px, box.y, pz) for px, pz in footprint]
    top = [(px, box.y - box.h, pz) for px, pz in footprint]
    return np.array(bottom + top, dtype=float)


def _checked_footprints(a, b):
    fa, fb = a.footprint(), b.footprint()
    if fa.area < AREA_EPS or fb.area < AREA_EPS:
        raise DomainError('Degenerate box footprint')
    return fa, fb


def bev_iou(a, b):
    """IoU of the two boxes' BEV footprints"""
    fa, fb = _checked_footprints(a, b)
    inter = intersection_area(fa, fb)
    union = fa.area + fb.area - inter
    return min(max(inter / union, 0.0), 1.0)


def iou3d(a, b):
    """Volumetric IoU: BEV intersection times vertical overlap over union volume"""
    fa, fb = _checked_footprints(a, b)
    top_a, bottom_a = a.vertical_range
    top_b, bottom_b = b.vertical_range
    overlap = min(bottom_a, bottom_b) - max(top_a, top_b)
    if overlap <= 0:
        return 0.0
    inter = intersection_area(fa, fb) * overlap
    union = fa.area * a.h + fb.area * b.h - inter
    return min(max(inter / union, 0.0), 1.0)


def box_iou(a, b, kind=IoUKind.IOU_3D):
    if kind == IoUKind.BEV:
        return bev_iou(a, b)
    return iou3d(a, b)


def shift_depth(box, d_prime):
    """Same box moved by d_prime along the camera z axis"""
    return replace(box, z=box.z + d_prime)
