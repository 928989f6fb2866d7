import pytest

from services.error_handler import (
    AnchorVanishes,
    ConfigInvalid,
    ErrorCategory,
    ErrorHandler,
    ErrorSeverity,
    GridMismatch,
    InvalidParams,
    PwlabError,
)


@pytest.fixture
def handler():
    return ErrorHandler(keep_critical=2)


def test_error_classes_carry_default_classification():
    assert GridMismatch("grids differ").category is ErrorCategory.VALIDATION_ERROR
    assert InvalidParams("bad").severity is ErrorSeverity.MEDIUM
    assert ConfigInvalid("bad").category is ErrorCategory.CONFIGURATION_ERROR
    assert PwlabError("x", severity=ErrorSeverity.LOW).severity is ErrorSeverity.LOW


def test_anchor_vanishes_records_block_index():
    error = AnchorVanishes(4, magnitude=1e-14, threshold=1e-9)
    data = error.to_dict()
    assert error.index == 4
    assert data["error"] == "AnchorVanishes"
    assert data["category"] == "recovery_error"
    assert data["context"] == {"index": 4, "magnitude": 1e-14, "threshold": 1e-9}


def test_pwlab_error_context_is_merged(handler):
    data = handler.handle_error(InvalidParams("bad N", context={"N": -1}), context={"experiment": "walsh"})
    assert data["context"] == {"N": -1, "experiment": "walsh"}
    assert data["severity"] == "medium"
    assert handler.error_count == 1


def test_foreign_errors_are_wrapped(handler):
    data = handler.handle_io_error(PermissionError("denied"), "/results/run")
    assert data["error"] == "PermissionError"
    assert data["category"] == "io_error"
    assert data["context"]["path"] == "/results/run"


def test_experiment_errors_name_the_experiment(handler):
    data = handler.handle_experiment_error(GridMismatch("grids differ"), "lti", {"seed": 3})
    assert data["context"] == {"seed": 3, "experiment": "lti"}


def test_validation_errors_become_config_errors(handler):
    data = handler.handle_validation_error("must be positive", "PWLAB_THREADS", 0)
    assert data["error"] == "ConfigInvalid"
    assert data["context"] == {"field": "PWLAB_THREADS", "value": "0"}


def test_critical_errors_are_kept_up_to_the_limit(handler):
    for i in range(3):
        handler.handle_error(PwlabError(f"failure {i}", severity=ErrorSeverity.CRITICAL))
    handler.handle_error(InvalidParams("not critical"))
    stats = handler.get_error_stats()
    assert stats["total_errors"] == 4
    assert stats["critical_errors_count"] == 2
    assert [e["message"] for e in stats["recent_critical_errors"]] == ["failure 1", "failure 2"]
