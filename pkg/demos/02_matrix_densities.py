"""
Moment matching between matrix densities
========================================

Wishart, inverse Wishart and generalized beta type II densities can be
traded for one another while keeping E[X] and E[X^-1].  Here we check that
and look at how well a GB2 mixture is captured by its inverse Wishart match.
"""

import numpy as np

from giwsmooth import distributions as dist

rng = np.random.default_rng(0)
W = np.array([[2.0, 0.3], [0.3, 1.0]])

# a Wishart whose scale is itself inverse Wishart integrates to a GB2
gb2 = dist.integrate_wishart_iw(v=8.0, w=12.0, W=W)
iw = dist.approx_gb2_as_iw(gb2)
print("GB2 mean\n", gb2.mean())
print("matched IW mean\n", iw.mean())
print("inverse means agree:", np.allclose(gb2.mean_inv(), iw.mean_inv()))

# sampling view: draw from the mixture and from its match
X = gb2.sample(rng, 200_000)
Y = iw.sample(rng, 200_000)
print("spread of X[0,0]: GB2 %.3f, IW %.3f" % (X[:, 0, 0].std(), Y[:, 0, 0].std()))

# inverse Wishart -> Wishart -> inverse Wishart leaves the parameters alone
p = dist.InverseWishartDensity(11.0, W)
back = dist.approx_wishart_as_iw(dist.approx_iw_as_wishart(p))
print("round trip:", back.v, np.abs(back.V - p.V).max())
