import pytest

from cadsi.core.stage_manager import BaseStage, StageManager
from cadsi.utils.errors import ConfigError


class RecordingStage(BaseStage):
    name = "record"
    events = []

    def on_enter(self, **kwargs):
        self.events.append(("enter", kwargs))

    def run(self, value=0):
        self.events.append(("run", value))
        if value < 0:
            raise ValueError("negative")
        return value * 2

    def on_exit(self):
        self.events.append(("exit", None))


@pytest.fixture
def manager():
    RecordingStage.events = []
    manager = StageManager({"config_path": None})
    manager.register_stage("record", RecordingStage)
    return manager


def test_stage_lifecycle_order(manager):
    assert manager.run_stage("record", value=3) == 6
    assert RecordingStage.events == [("enter", {"value": 3}), ("run", 3), ("exit", None)]
    assert manager.active_stage is None
    assert manager.history == [("record", "ok")]


def test_failing_stage_still_exits(manager):
    with pytest.raises(ValueError):
        manager.run_stage("record", value=-1)
    assert RecordingStage.events[-1] == ("exit", None)
    assert manager.history == [("record", "ValueError")]


def test_unknown_stage(manager):
    with pytest.raises(ConfigError) as info:
        manager.run_stage("deploy")
    assert info.value.code == "unknown_command"


def test_factory_must_build_a_stage(manager):
    manager.register_stage("broken", lambda m: object())
    with pytest.raises(ConfigError):
        manager.run_stage("broken")


def test_context_is_shared_with_stages(manager):
    seen = {}

    class ContextStage(BaseStage):
        name = "context"

        def run(self):
            seen.update(self.manager.context)

    manager.register_stage("context", ContextStage)
    manager.run_stage("context")
    assert seen == {"config_path": None}
