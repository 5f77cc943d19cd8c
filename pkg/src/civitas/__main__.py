from civitas.cli import main

raise SystemExit(main())
