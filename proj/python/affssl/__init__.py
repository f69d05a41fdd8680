from ._affssl import *  # noqa: F401,F403
from ._affssl import __doc__  # noqa: F401
