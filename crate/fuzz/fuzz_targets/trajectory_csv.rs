#![no_main]

use dynwave::io::{read_trajectory, write_trajectory};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_trajectory(data) {
        let mut buf = vec![];
        write_trajectory(&mut buf, &rows).expect("in-memory write");
        let back = read_trajectory(buf.as_slice()).expect("written trajectory reparses");
        assert_eq!(back.len(), rows.len());
    }
});
