"""Secure IoT insulin-pump telemetry.

A desk-scale pipeline: a simulated infusion pump speaks a CRC-framed serial
protocol to a gateway, the gateway signs health records with a from-scratch
SHA-256 and ships them to a cloud record store, and preset control commands
travel the other way, verified before they can touch the pump.
"""

from siot.sha256 import Digest256, digest_of, format_digest, parse_digest

__all__ = ["Digest256", "digest_of", "format_digest", "parse_digest"]

__version__ = "0.1.0"
