# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

NAME = "optdesign"
DISPLAY_NAME = "OptDesign"
__version__ = "0.1.0"
