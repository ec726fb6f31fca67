import doctest
import importlib
import pkgutil

import pytest

import exchangeable

MODULES = sorted(m.name for m in pkgutil.walk_packages(exchangeable.__path__, "exchangeable."))


@pytest.mark.parametrize("name", MODULES)
def test_module_doctests(name):
    result = doctest.testmod(importlib.import_module(name), optionflags=doctest.ELLIPSIS)
    assert result.failed == 0
