from xlsap.cli import main

main()
