"""ThingPot: an IoT platform honeypot emulating a Philips Hue bridge."""

__version__ = "0.1.0"
