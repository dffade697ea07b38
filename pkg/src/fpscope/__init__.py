"""Static detection of device fingerprinting in third-party Android SDKs."""

__version__ = "0.1.0"
