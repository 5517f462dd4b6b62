"""Identity-independent policy engine and management-plane toolkit for IoT.

Subpackages split along the plane's moving parts: the expression language
(`expr`), policy model and lint (`model`), device directory (`directory`),
indexed policy store (`store`), decision engine (`engine`), wire schemas and
pub/sub transport (`wire`, `transport`), admin HTTP API (`api`), and the
sensor-consensus hazard simulation (`hazard`).
"""

__version__ = "0.1.0"
