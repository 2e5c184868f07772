import dataclasses

import pytest

from vlc_uplink.raytrace import trace_unsteered
from vlc_uplink.scene import Vec3, default_paper_scenario


@pytest.fixture(scope="session")
def default_sc():
    return default_paper_scenario()


@pytest.fixture(scope="session")
def center_ir(default_sc):
    return trace_unsteered(default_sc, Vec3(2.0, 4.0, 1.0), 2)


def with_room(scenario, **changes):
    return dataclasses.replace(scenario, room=dataclasses.replace(scenario.room, **changes))


def with_tx(scenario, **changes):
    return dataclasses.replace(scenario, transmitter=dataclasses.replace(scenario.transmitter, **changes))
