"""The README quick-start must run as written against the public API."""

import numpy as np

from fracheat import (FlatTorus, TimeGrid, build_eigensystem, bump_source,
                      heat_kernel, make_sts, solve)


def test_readme_quick_start():
    circle = build_eigensystem(FlatTorus(metric=((1.0,),),
                                         periods=(2 * np.pi,)), K=64)
    grid = TimeGrid.for_horizon(T=3.0, pad_factor=4, n_t=1024)
    f = bump_source(circle, grid, 3.0, center=[1.0], radius=0.5,
                    t_center=0.0, t_halfwidth=1.5)
    report = solve(f, s=0.5)
    assert report.f_norm > 0
    assert report.residual_rel >= 0
    assert isinstance(report.flagged, bool)

    sts = make_sts(circle, grid, s=0.5, horizon=3.0, patch=range(0, 40))
    response = sts(f)
    assert response.shape[0] == 40
    k = heat_kernel(circle, [0], [5], tau=1.0)
    assert k.shape == (1, 1) and k[0, 0] > 0
