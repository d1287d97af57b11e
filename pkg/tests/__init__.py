# Tests package for global-motion-tools
# This file is needed to make the tests directory a proper Python package.
