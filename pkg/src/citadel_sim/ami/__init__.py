"""Asset Management Infrastructure: the off-chip ledger and its wire protocol."""
from .client import AmiClient, AmiUnreachable, InProcessTransport, TcpTransport
from .ledger import AmiLedger, AmiRecord, Denied, NotRegistered
from .protocol import AmiService, identity_envelope, lifecycle_update, transport_key_for
from .server import AmiServer

__all__ = [
    "AmiClient",
    "AmiLedger",
    "AmiRecord",
    "AmiServer",
    "AmiService",
    "AmiUnreachable",
    "Denied",
    "InProcessTransport",
    "NotRegistered",
    "TcpTransport",
    "identity_envelope",
    "lifecycle_update",
    "transport_key_for",
]
