# Copyright (c) 2025 sprowii
"""Файлы матриц: бинарный DDSS и CSV."""
