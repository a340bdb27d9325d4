from avalanche.cli import main

main()
