"""Conditional DCGAN data augmentation for motor-imagery EEG."""

__version__ = "0.1.0"
