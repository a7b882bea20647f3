"""Quantized spectrum cartography: simulate multi-emitter radio maps, sense
them through a dithered Gaussian quantizer, and recover the full map by
maximum-likelihood estimation under tensor or generative map models."""

from .analysis import BoundParams, empirical_kl, error_bound, lnre, log_covering_btd, log_covering_dgm, tau_btd, tau_dgm
from .btd import BtdDims, BtdFactors, SolverConfig, btd_gradients, btd_objective, btd_predict, btd_reconstruct, btd_solve
from .dgm import (
    DenseLayer,
    DgmConfig,
    DgmVars,
    GeneratorNet,
    dgm_gradients,
    dgm_objective,
    dgm_reconstruct,
    dgm_solve,
    gen_forward,
    gen_vjp,
    lipschitz_product,
    load_generator,
    save_generator,
)
from .optim import SolverDivergence
from .quant import (
    LinkConstants,
    ObservationSet,
    QuantizerSpec,
    compute_constants,
    design_bins,
    dither_quantize,
    link_grad,
    link_prob,
    link_prob_all,
    log_transform,
    inverse_transform,
    make_quantizer,
    nll_entry,
    quantize_fibers,
)
from .simkit import (
    Emitter,
    Psd,
    RadioMap,
    SampleSet,
    Scenario,
    ShadowingParams,
    Slf,
    compose,
    gen_psd,
    gen_shadow_field,
    gen_slf,
    generate_scene,
    load_map_blob,
    load_scenario,
    sample_fibers,
    save_map_blob,
    save_scenario,
)

__version__ = "0.1.0"
