import pytest

from ml_fixture import write_fixture


@pytest.fixture(scope="session")
def movielens_fixture(tmp_path_factory):
    """Session-wide MovieLens-style CSV pair with known group structure."""
    out = tmp_path_factory.mktemp("ml_data")
    ratings, movies, group_orders = write_fixture(out, seed=0)
    return {"ratings": ratings, "movies": movies, "group_orders": group_orders}
