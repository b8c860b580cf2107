import pytest

from hubfleet.scenario import Center, Scenario, Warehouse, bundled_scenario


@pytest.fixture(scope="session")
def towns_log() -> Scenario:
    return bundled_scenario("towns12-log")


@pytest.fixture(scope="session")
def towns_pro() -> Scenario:
    return bundled_scenario("towns12-pro")


@pytest.fixture()
def toy_star_scenario() -> Scenario:
    """J=2 star with unit rates and a unit-distance warehouse; every figure
    is known in closed form."""
    return Scenario(
        warehouses=(Warehouse(id=2, position=(1.0, 0.0), demand_per_day=5.0,
                              servers=1, unload_rate_per_hour=1.0),),
        center=Center(servers=1, load_rate_per_hour=1.0),
        truck_speed_kmh=1.0,
    )
