"""Weak values and weak variances of momentum for 1-D pure states."""
