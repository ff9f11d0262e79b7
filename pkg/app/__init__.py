# Copyright (c) 2025 sprowii
"""Differentiable Dictionary Search: NoteFlow, NMF-бейзлайн, эксперименты."""
