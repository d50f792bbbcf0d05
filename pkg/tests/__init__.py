# Tests for phaseforge core logic.
