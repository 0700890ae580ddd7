"""Compositional subspace edits with learned routing on a frozen toy transformer."""

from ._core import (
    BackboneConfig,
    Example,
    FrozenModel,
    HookSite,
    InterferenceReport,
    RouterNet,
    SubspaceEdit,
    TaskSpec,
    TrainConfig,
    TrainState,
    TrainableCount,
    apply_edit,
    backbone_param_count,
    build_frozen,
    compose,
    composed_logits,
    count_trainable,
    edit_delta,
    edit_param_count,
    eval_frozen,
    eval_loss,
    gate,
    gen_task_data,
    grad_check_model,
    identity_init,
    init_router,
    init_state,
    load_state,
    orthonormalize_rows,
    plain_logits,
    random_orthonormal,
    render_report,
    retract,
    route,
    router_param_count,
    rowspace_projector,
    run_interference_benchmark,
    save_state,
    sparsity_penalty,
    task_targets,
    train_run,
    zero_router,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
