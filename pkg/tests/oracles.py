"""Scalar-loop reference implementations, deliberately naive.

Nothing here imports the package under test.
"""

import math


def mse_loop(x, y):
    m, n = len(x), len(x[0])
    total = 0.0
    for i in range(m):
        for j in range(n):
            d = float(x[i][j]) - float(y[i][j])
            total += d * d
    return total / (m * n)


def psnr_loop(x, y, max_val=1.0):
    err = mse_loop(x, y)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(max_val * max_val / err)


def ssim_loop(x, y, win=7, k1=0.01, k2=0.03, L=1.0):
    c1 = (k1 * L) ** 2
    c2 = (k2 * L) ** 2
    c3 = c2 / 2
    m, n = len(x), len(x[0])
    vals = []
    npix = win * win
    for r in range(m - win + 1):
        for c in range(n - win + 1):
            sx = sy = 0.0
            for i in range(win):
                for j in range(win):
                    sx += x[r + i][c + j]
                    sy += y[r + i][c + j]
            mx, my = sx / npix, sy / npix
            vx = vy = cov = 0.0
            for i in range(win):
                for j in range(win):
                    a = x[r + i][c + j] - mx
                    b = y[r + i][c + j] - my
                    vx += a * a
                    vy += b * b
                    cov += a * b
            vx, vy, cov = vx / npix, vy / npix, cov / npix
            sdx, sdy = math.sqrt(vx), math.sqrt(vy)
            lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
            con = (2 * sdx * sdy + c2) / (vx + vy + c2)
            st = (cov + c3) / (sdx * sdy + c3)
            vals.append(lum * con * st)
    return sum(vals) / len(vals)


def region_stats_loop(img, r0, r1, c0, c1):
    vals = [img[i][j] for i in range(r0, r1) for j in range(c0, c1)]
    n = len(vals)
    mean = sum(vals) / n
    var = sum((v - mean) ** 2 for v in vals) / (n - 1)
    return mean, var


def snr_loop(img, r0, r1, c0, c1):
    _, var = region_stats_loop(img, r0, r1, c0, c1)
    peak = max(max(row) for row in img)
    return 10.0 * math.log10(peak * peak / var)


def enl_loop(img, r0, r1, c0, c1):
    mean, var = region_stats_loop(img, r0, r1, c0, c1)
    return mean * mean / var


def central_difference(f, params, h=1e-6):
    """Gradient of scalar ``f()`` w.r.t. every entry of each tensor in ``params``.

    ``params`` are mutated in place and restored.
    """
    grads = []
    for p in params:
        flat = p.data.view(-1)
        g = [0.0] * flat.numel()
        for k in range(flat.numel()):
            orig = float(flat[k])
            flat[k] = orig + h
            up = float(f())
            flat[k] = orig - h
            down = float(f())
            flat[k] = orig
            g[k] = (up - down) / (2 * h)
        grads.append(g)
    return grads
