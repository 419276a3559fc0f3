PRIMARY = "#af5fd7"
SECONDARY = "#00af87"
PASS = "green"
FAIL = "bold red"
PARTIAL = "yellow"
