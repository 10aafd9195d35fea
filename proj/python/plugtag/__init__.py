try:
    from ._plugtag import *  # noqa: F401,F403
    from ._plugtag import __doc__  # noqa: F401
except ImportError:  # in-tree builds put the extension on PYTHONPATH instead
    from _plugtag import *  # noqa: F401,F403
    from _plugtag import __doc__  # noqa: F401
