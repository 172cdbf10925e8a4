"""Computational convex geometry: symmetry measures, isotropic constants, iterated-midpoint
densities and certified covers by homothets."""

from .geometry import (AffineImage, Ball, ConvexBody, DegenerateBodyError, Ellipsoid, GeometryError,
                       HPolytope, Location, ReflectIntersect, UnsupportedVolumeError, VPolytope,
                       affine_image, bounding_box, contains, exact_moments, exact_volume, gauge,
                       reflect_intersect, translate)
from .sampler import SampleBatch, mc_volume, sample_sk, sample_uniform
from .isotropy import (MomentEstimate, estimate_moments, isotropic_constant, isotropic_normalize,
                       thin_shell_stat)
from .symmetry import (SymmetryResult, bound_centred, bound_delta_kb, centred_symmetry, delta_kb,
                       intersection_volume_ratio)
from .density import (GridDensity, centroid_value_check, check_lemma22, convolve_double,
                      grid_indicator_density, logconcavity_check, midpoint_density, sk_density,
                      small_ball_probe)
from .covering import (CoverCertificate, LatticeReport, bound_hadwiger, classical_bound,
                       ehrhart_check, greedy_cover, hadwiger_pipeline, verify_cover)

__version__ = "0.1.0"
