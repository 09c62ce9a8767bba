from ._api import create_estimator, estimate
from ._classical import *
from ._concurrency import *
from ._config import *
from ._estimation import *
from ._exceptions import *
from ._experiments import *
from ._features import *
from ._geometry import *
from ._linalg import *
from ._mlp import *
from ._room import *
from ._wav import *
from .estimators import *

__all__ = ["create_estimator", "estimate"]
__all__ += _classical.__all__
__all__ += _concurrency.__all__
__all__ += _config.__all__
__all__ += _estimation.__all__
__all__ += _exceptions.__all__
__all__ += _experiments.__all__
__all__ += _features.__all__
__all__ += _geometry.__all__
__all__ += _linalg.__all__
__all__ += _mlp.__all__
__all__ += _room.__all__
__all__ += _wav.__all__
__all__ += estimators.__all__

__version__ = "0.1.0"


__locals = locals()
for __name in __all__:
    if not __name.startswith("__"):
        setattr(__locals[__name], "__module__", "doacore")  # noqa
