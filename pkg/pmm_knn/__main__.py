from pmm_knn.main import main

raise SystemExit(main())
