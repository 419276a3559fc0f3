CHECK = "✓"
CROSS = "✗"
BULLET = "•"
