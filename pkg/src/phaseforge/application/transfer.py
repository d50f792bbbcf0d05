"""Weight transfer between training stages.

Parameters are copied by name. Names the target needs but the source lacks are
initialized fresh and tagged ``random_init`` so the trainer gives them the higher
learning rate; source-only names (fc'_phase, fc_order, the RSD heads) are dropped.
"""

import logging

from phaseforge.application.layers import init_array
from phaseforge.domain import ArchSpec, ParamStore, Variant

logger = logging.getLogger(__name__)

V = Variant

# source variant -> target variants it may initialize
TRANSFER_TABLE: dict[Variant, frozenset[Variant]] = {
    V.PHASE_ENCODER: frozenset({V.PHASE_ENCODER, V.ENDON2N_VANILLA, V.ENDON2N_UPDATED}),
    V.PROGRESS_ENCODER: frozenset({V.RSD_PROGRESS, V.RSDNET, V.PHASE_ENCODER}),
    V.RSD_PROGRESS: frozenset({V.ENDON2N_UPDATED, V.PHASE_ENCODER}),
    V.RSDNET: frozenset({V.ENDON2N_VANILLA, V.PHASE_ENCODER}),
    V.TEMPCON: frozenset({V.PHASE_ENCODER, V.ENDON2N_VANILLA}),
    V.ENDON2N_VANILLA: frozenset({V.ENDON2N_VANILLA}),
    V.ENDON2N_UPDATED: frozenset({V.ENDON2N_UPDATED}),
}


def _compatible_dims(src: ArchSpec, dst: ArchSpec) -> None:
    if src.input_dim != dst.input_dim or src.encoder_widths != dst.encoder_widths:
        raise ValueError(
            f"Encoder of {src.variant.value} ({src.input_dim}→{src.encoder_widths}) does not "
            f"match {dst.variant.value} ({dst.input_dim}→{dst.encoder_widths})."
        )


def transfer_weights(
    src: ParamStore,
    dst_spec: ArchSpec,
    *,
    seed: int,
    into: ParamStore | None = None,
) -> ParamStore:
    """Build ``dst_spec`` parameters from ``src``.

    With ``into``, names missing from ``src`` are taken from ``into`` (keeping its
    random_init tags) before falling back to fresh initialization. This merges a
    fine-tuned encoder into an already transferred sequence model.
    """
    allowed = TRANSFER_TABLE.get(src.arch_tag, frozenset())
    if dst_spec.variant not in allowed:
        raise ValueError(
            f"No transfer from {src.arch_tag.value} to {dst_spec.variant.value}."
        )
    _compatible_dims(src.spec, dst_spec)
    if into is not None and into.spec != dst_spec:
        raise ValueError("transfer_weights: 'into' must have the target architecture.")

    params, random_init = {}, set()
    for name, shape in dst_spec.parameter_shapes().items():
        if name in src.params:
            if src[name].shape != shape:
                raise ValueError(
                    f"Cannot transfer {name}: shape {src[name].shape} vs {shape}."
                )
            params[name] = src[name]
        elif into is not None:
            params[name] = into[name]
            if name in into.random_init:
                random_init.add(name)
        else:
            params[name] = init_array(dst_spec, name, seed)
            random_init.add(name)
    logger.info(
        "Transferred %s -> %s: %d copied, %d freshly initialized",
        src.arch_tag.value,
        dst_spec.variant.value,
        sum(1 for n in params if n in src.params),
        len(random_init),
    )
    return ParamStore(
        spec=dst_spec,
        params=params,
        seed=seed,
        stage=f"transfer:{src.stage}",
        iteration=0,
        random_init=frozenset(random_init),
    )
