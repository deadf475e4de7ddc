# Tests for ERKLAB
