"""Binary PPM heatmaps of nodal fields by barycentric rasterization.

Magnitudes are mapped through a fixed 256-level ramp (black -> deep blue ->
cyan -> yellow -> white, piecewise linear in RGB); pixels outside the domain
stay black. The output is a P6 PPM, written deterministically.
"""

import numpy as np

__all__ = ["color_ramp", "rasterize", "write_ppm", "render_heatmap"]

_ANCHORS = np.array([
    (0.00, 0, 0, 0),
    (0.25, 20, 50, 160),
    (0.50, 0, 200, 220),
    (0.75, 240, 220, 40),
    (1.00, 255, 255, 255),
])


def color_ramp():
    """256 x 3 uint8 lookup table of the documented ramp."""
    t = np.linspace(0.0, 1.0, 256)
    lut = np.empty((256, 3), dtype=np.uint8)
    for c in range(3):
        lut[:, c] = np.interp(t, _ANCHORS[:, 0], _ANCHORS[:, c + 1]).round()
    return lut


def rasterize(mesh, values, width=512, height=512, vmax=None):
    """Rasterize |values| over the mesh onto a pixel grid.

    P1 nodal magnitudes are interpolated barycentrically at pixel centers;
    pixels not covered by any triangle are left at zero coverage.
    """
    mags = np.abs(np.asarray(values))
    if vmax is None:
        vmax = float(mags.max()) if mags.size else 0.0
    if vmax <= 0.0:
        vmax = 1.0
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    span = np.maximum(hi - lo, 1e-300)
    xs = lo[0] + (np.arange(width) + 0.5) / width * span[0]
    ys = lo[1] + (np.arange(height) + 0.5) / height * span[1]

    field = np.zeros((height, width))
    covered = np.zeros((height, width), dtype=bool)
    verts = mesh.vertices
    for tri in mesh.triangles:
        p0, p1, p2 = verts[tri[0]], verts[tri[1]], verts[tri[2]]
        xmin, ymin = np.minimum(np.minimum(p0, p1), p2)
        xmax, ymax = np.maximum(np.maximum(p0, p1), p2)
        i0, i1 = np.searchsorted(xs, (xmin, xmax))
        j0, j1 = np.searchsorted(ys, (ymin, ymax))
        if i0 >= i1 or j0 >= j1:
            continue
        px, py = np.meshgrid(xs[i0:i1], ys[j0:j1])
        det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])
        l1 = ((px - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (py - p0[1])) / det
        l2 = ((p1[0] - p0[0]) * (py - p0[1]) - (px - p0[0]) * (p1[1] - p0[1])) / det
        l0 = 1.0 - l1 - l2
        inside = (l0 >= -1e-12) & (l1 >= -1e-12) & (l2 >= -1e-12)
        vals = l0 * mags[tri[0]] + l1 * mags[tri[1]] + l2 * mags[tri[2]]
        block_f = field[j0:j1, i0:i1]
        block_c = covered[j0:j1, i0:i1]
        take = inside & ~block_c
        block_f[take] = vals[take]
        block_c |= inside
    # image row 0 is the top of the domain
    levels = np.clip(field / vmax * 255.0, 0.0, 255.0).astype(np.uint8)
    rgb = color_ramp()[levels]
    rgb[~covered] = 0
    return rgb[::-1]


def write_ppm(path, rgb, header_lines=()):
    """Write an (H, W, 3) uint8 array as binary PPM (P6)."""
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n")
        for line in header_lines:
            fh.write(f"# {line}\n".encode("utf-8"))
        fh.write(f"{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb).tobytes())


def render_heatmap(mesh, values, path, width=512, height=512,
                   header_lines=()):
    write_ppm(path, rasterize(mesh, values, width, height), header_lines)
