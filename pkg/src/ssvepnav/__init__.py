"""Desk-scale SSVEP teleoperation loop: synthetic EEG, a from-scratch CNN
decoder, pinhole photogrammetry and a simulated robot navigated closed-loop."""

__version__ = "0.1.0"
