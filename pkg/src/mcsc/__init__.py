"""MCSC: AES-protected frames over keyed channel hopping with master-clock sync."""

__version__ = "0.1.0"
