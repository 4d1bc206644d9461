# Copyright (c) 2026 The hfl Authors
# SPDX-License-Identifier: Apache-2.0
"""Hotspot-gated fusion / mixture-of-aligners conversation classifier.

The heavy lifting lives in the compiled extension `_core`; this package
re-exports its surface. In a development tree the extension is built by
CMake outside the package directory, hence the fallback import.
"""

try:
    from ._core import *  # noqa: F401,F403
    from ._core import __doc__  # noqa: F401
except ImportError:  # pragma: no cover - development layout
    from _core import *  # noqa: F401,F403
