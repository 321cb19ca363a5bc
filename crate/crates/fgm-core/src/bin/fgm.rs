fn main() {
    println!("fgm");
}
