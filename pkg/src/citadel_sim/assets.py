from __future__ import annotations

from enum import Enum


class AssetKind(str, Enum):
    CHIP_ID = "ChipId"
    PUF_EXPECTED_RESPONSE = "PufExpectedResponse"
    IPID = "IpId"
    OBFUSCATION_VECTOR = "ObfuscationVector"
    COMM_KEY = "CommKey"
    LIFECYCLE_VALIDATION_KEY = "LifecycleValidationKey"
    FIRMWARE_SIGNATURE = "FirmwareSignature"
    SCAN_KEY = "ScanKey"
    LIFECYCLE_STATE = "LifecycleState"
