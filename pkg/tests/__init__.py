"""Tests for seqkit."""
