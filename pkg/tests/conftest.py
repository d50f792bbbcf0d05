"""Shared fixtures: a short three-phase workflow, its records and tiny network specs."""

import pytest

from phaseforge.application import generate_dataset
from phaseforge.domain import ArchSpec, SurgeryRecord, WorkflowModel

SHORT_WORKFLOW = WorkflowModel(
    num_phases=3,
    phase_duration_mean=(8.0, 10.0, 6.0),
    phase_duration_std=(2.0, 2.0, 1.0),
    min_phase_duration=3.0,
    feature_dim=6,
    emission_noise_std=0.3,
    time_channel_scale=30.0,
)


@pytest.fixture
def workflow() -> WorkflowModel:
    return SHORT_WORKFLOW


@pytest.fixture
def records() -> list[SurgeryRecord]:
    return generate_dataset(SHORT_WORKFLOW, 12, seed=7)


@pytest.fixture
def record(records: list[SurgeryRecord]) -> SurgeryRecord:
    return records[0]


@pytest.fixture
def small_arch() -> ArchSpec:
    return ArchSpec(
        input_dim=SHORT_WORKFLOW.feature_dim,
        encoder_widths=(8,),
        lstm_hidden=6,
        num_phases=SHORT_WORKFLOW.num_phases,
    )
