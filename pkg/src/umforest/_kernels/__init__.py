"""Hot-loop kernels with a compiled backend and a pure-Python fallback.

The compiled extension is picked at import when it was built; otherwise
the pure-Python module is used. Both expose the same functions with
bit-identical results, so the choice only affects speed.
"""

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

_active = _ckernels if _ckernels is not None else _pykernels

FUNCTIONS = (
    "mix64",
    "counter_uniform",
    "child_key",
    "child_keys",
    "counter_uniforms",
    "gw_forest",
    "gw_survivors",
    "ultrametric_violation",
)


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    return "compiled" if _active is _ckernels and _ckernels is not None else "python"


def get_backend(name=None):
    """Return the kernel module called ``name`` (the active one if None)."""
    if name is None:
        return _active
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}; have {available_backends()}")


def set_backend(name):
    """Select the process-wide kernel backend; returns the previous name."""
    global _active
    previous = backend_name()
    _active = get_backend(name)
    return previous


def counter_uniform(key, counter):
    return _active.counter_uniform(key, counter)


def child_keys(key, start, n):
    return _active.child_keys(key, start, n)


def counter_uniforms(key, start, n):
    return _active.counter_uniforms(key, start, n)


def child_key(key, index):
    return _active.child_key(key, index)


def gw_forest(root_keys, beta, horizon, p_split=0.5, max_nodes=10_000_000):
    return _active.gw_forest(root_keys, float(beta), float(horizon), float(p_split), int(max_nodes))


def gw_survivors(root_keys, beta, horizon, p_split=0.5, max_nodes=100_000_000):
    return _active.gw_survivors(root_keys, float(beta), float(horizon), float(p_split), int(max_nodes))


def ultrametric_violation(D, tol=0):
    return _active.ultrametric_violation(D, int(tol))
