"""Transformer-encoder DQN with recurrent sublayers.

Thin wrapper over the compiled extension. When installed as a wheel the
extension lives inside this package; in a build-tree checkout it sits on
PYTHONPATH as a top-level module.
"""

try:
    from dbgfqn._core import *  # noqa: F401,F403
    from dbgfqn import _core as _impl
except ImportError:
    from _core import *  # noqa: F401,F403
    import _core as _impl

__all__ = [name for name in dir(_impl) if not name.startswith("_")]
__version__ = "0.1.0"
