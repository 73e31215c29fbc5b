"""Tools for building and scoring multi-hand grasp instruction datasets.

Modules:

- ``geometry``: triangle meshes, part labels, signed distance queries, surface sampling
- ``kinematics``: hand specs, forward kinematics, bundled hands
- ``contact``: per-link contact detection, contact summaries, penetration filter
- ``codec``: per-hand grasp binning and the special-token stream format
- ``conversation``: question templates and conversation samples
- ``metrics``: Chamfer distance, penetration depth, part accuracy
- ``pipeline`` and ``cli``: the ``graspkit`` batch command
"""

__version__ = "0.1.0"
