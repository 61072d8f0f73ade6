from .rpc import main

raise SystemExit(main())
