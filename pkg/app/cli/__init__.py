# Copyright (c) 2025 sprowii
"""Командная строка: конфигурация запуска, раскладка каталогов, команды."""
