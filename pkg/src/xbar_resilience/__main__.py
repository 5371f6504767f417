# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
# SPDX-License-Identifier: MIT
import sys

from .cli import main

sys.exit(main())
