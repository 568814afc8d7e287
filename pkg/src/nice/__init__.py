"""Nearly invariant causal estimation: DGPs, objectives, estimators, verifiers."""

from .dataset import (
    CovariateRole,
    EnvData,
    GroundTruth,
    MultiEnvDataset,
    load_multi_env_csv,
    random_orthogonal,
    save_multi_env_csv,
    scramble,
)
from .dgp import (
    Graph,
    LinearDgpConfig,
    MixtureSpec,
    NonlinearDgpConfig,
    augment_with_colliders,
    diversity,
    gen_linear_env,
    gen_linear_suite,
    gen_nonlinear_env,
    gen_nonlinear_suite,
    mix_environments,
)
from .estimators import (
    EstimateReport,
    cate_hat,
    evaluate,
    noncausal_weight_error,
    pehe,
    satt_hat,
    true_satt,
)
from .icp import IcpConfig, IcpResult, icp_select, invariance_test
from .models import (
    DragonnetParams,
    LossKind,
    Ols2Params,
    TarnetParams,
    both_arms,
    dragonnet_risk,
    forward,
    grad_risk,
    init_dragonnet,
    init_ols2,
    init_tarnet,
    risk,
)
from .objectives import (
    Objective,
    TrainConfig,
    TrainReport,
    erm_objective,
    irm_penalty,
    irmv1_objective,
    train,
)
from .theory import (
    Coarsening,
    JointPmf3,
    aggregate_bias,
    coarsened_bias,
    collider_bias,
    overlap_check,
    verify_collider_theorem,
)

__all__ = [name for name in dir() if not name.startswith("_")]
