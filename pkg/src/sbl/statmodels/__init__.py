"""Photon-number distribution models and their algebra."""
from .algebra import admix_coherent, attenuate, mixture_g2
from .distribution import (
    MODEL_TAGS,
    POLICIES,
    PhotonNumberDistribution,
    from_ln_weights,
    from_probabilities,
    gN_from_pmf,
    ln_factorial_moment,
    log10_gN_from_pmf,
    normalize,
    point_mass,
)
from .io import read_pmf, write_pmf
from .logdomain import LogProb, log10_add, log10_sum
from .models import (
    GainParam,
    log_pmf_bose_einstein,
    log_pmf_poisson,
    log_weight_bsv,
    log_weight_superbunching,
)
from .sampling import PhotonNumberSampler, sample_photon_number

__all__ = [
    "MODEL_TAGS",
    "POLICIES",
    "GainParam",
    "LogProb",
    "PhotonNumberDistribution",
    "PhotonNumberSampler",
    "admix_coherent",
    "attenuate",
    "from_ln_weights",
    "from_probabilities",
    "gN_from_pmf",
    "ln_factorial_moment",
    "log10_add",
    "log10_gN_from_pmf",
    "log10_sum",
    "log_pmf_bose_einstein",
    "log_pmf_poisson",
    "log_weight_bsv",
    "log_weight_superbunching",
    "mixture_g2",
    "normalize",
    "point_mass",
    "read_pmf",
    "sample_photon_number",
    "write_pmf",
]
